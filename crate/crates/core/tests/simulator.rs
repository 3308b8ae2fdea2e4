mod common;

use std::collections::BTreeMap;

use mcq_entropy::client::{run_campaign, ModelConfig, SampleStore};
use mcq_entropy::dataset::Category;
use mcq_entropy::parsing::parse_answer;
use mcq_entropy::prompting::PromptTemplate;
use mcq_entropy::simulator::{scripted_sample, ResponderScript, ScriptEntry, ScriptedResponder, SimSeed};
use mcq_entropy::stats::{
    aggregate_by_category, default_entropy_edges, default_error_edges, shannon_entropy, summarize,
    AnswerDistribution, ProbabilityBase, DEFAULT_BINS,
};

use common::{fixed_options, toy_set};

fn one(id: &str, entry: ScriptEntry) -> ResponderScript {
    ResponderScript::new(BTreeMap::from([(id.to_string(), entry)])).unwrap()
}

fn plug_in_entropy(script: &ResponderScript, id: &str, n: u32, seed: SimSeed) -> f64 {
    let parsed = (0..n).map(|i| parse_answer(&scripted_sample(script, id, i, seed).unwrap()).value);
    shannon_entropy(&AnswerDistribution::from_parsed(id, parsed, ProbabilityBase::Valid)).unwrap()
}

#[test]
fn invalid_reply_rate_matches_script() {
    let script = one("q", ScriptEntry::new([0.3, 0.2, 0.2, 0.1, 0.1], 0.1));
    let invalid = (0..500)
        .filter(|&i| parse_answer(&scripted_sample(&script, "q", i, SimSeed(11)).unwrap()).value.is_none())
        .count();
    assert!((invalid as f64 / 500.0 - 0.1).abs() <= 0.04, "{invalid}");
    // seed-pinned
    assert_eq!(invalid, 51);
}

#[test]
fn plug_in_entropy_converges() {
    let entry = ScriptEntry::new([0.4, 0.3, 0.15, 0.1, 0.05], 0.0);
    let truth = entry.true_entropy();
    let p = entry.valid_probs();
    // Variance of -ln p under the script, which sets the estimator's spread.
    let var = p.iter().map(|&q| q * q.ln() * q.ln()).sum::<f64>() - truth * truth;
    let script = one("q", entry);
    let ns = [20u32, 200, 2000];
    let estimates: Vec<f64> = ns.iter().map(|&n| plug_in_entropy(&script, "q", n, SimSeed(12))).collect();
    for (&n, &h) in ns.iter().zip(&estimates) {
        let n = n as f64;
        let bound = 4.0 * (var / n).sqrt() + 4.0 / (2.0 * n);
        assert!((h - truth).abs() <= bound, "N = {n}: {h} vs {truth} (bound {bound})");
    }
    // seed-pinned
    assert_eq!(estimates, [1.392321254757429, 1.3994861309611724, 1.4162166561246408]);
}

#[tokio::test(flavor = "multi_thread")]
async fn category_diversity_orders_mean_entropy() {
    let set = toy_set();
    let spread = |c: Category| match c {
        Category::D => 0.02,
        Category::F => 0.06,
        Category::C => 0.1,
        Category::S => 0.14,
        Category::M => 0.18,
    };
    let script = ResponderScript::for_questions(&set, |q| {
        let s = spread(q.category);
        let mut probs = [s; 5];
        probs[q.correct.index()] = 1.0 - 4.0 * s;
        ScriptEntry::new(probs, 0.0)
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let store = SampleStore::new(dir.path().join("s.jsonl"));
    let mut cfg = ModelConfig::new("http://unused", "sim");
    cfg.parallelism = 8;
    let outcome = run_campaign(
        &set,
        &PromptTemplate::default(),
        &cfg,
        200,
        &store,
        &ScriptedResponder::new(script, SimSeed(13)),
        fixed_options(Some(13)),
    )
    .await
    .unwrap();
    let (stats, _) = summarize(&set, &outcome.records, ProbabilityBase::Valid);
    let agg = aggregate_by_category(
        &stats,
        &default_error_edges(DEFAULT_BINS),
        &default_entropy_edges(DEFAULT_BINS),
    )
    .unwrap();
    let mean = |c| agg[&c].mean_entropy.unwrap();
    assert!(mean(Category::D) <= mean(Category::C));
    assert!(mean(Category::C) <= mean(Category::M));
}

