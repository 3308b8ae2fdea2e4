//! CSV tables and SVG figures for a finished campaign.
//!
//! CSV files are the data of record; figures are rendered from the same
//! binned values. Floats are written in shortest round-trip form so a table
//! read back yields the exact values it was written from.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::curves::{binary_entropy, curve_grid, CurveParams};
use crate::dataset::Category;
use crate::stats::{
    aggregate_by_category, histogram_1d, histogram_2d, max_entropy, uniform_edges, CategorySummary,
    Histogram1D, Histogram2D, QuestionStats, StatsError,
};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("stats table line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReportConfig {
    pub entropy_bins: usize,
    pub error_bins: usize,
    /// Points sampled along the binary curve overlay.
    pub curve_points: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            entropy_bins: crate::stats::DEFAULT_BINS,
            error_bins: crate::stats::DEFAULT_BINS,
            curve_points: 201,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportBundle {
    pub stats_csv: PathBuf,
    pub entropy_hist_csv: PathBuf,
    pub joint_hist_csv: PathBuf,
    pub category_csvs: BTreeMap<Category, PathBuf>,
    pub category_summary_csv: PathBuf,
    pub curve_overlay_csv: PathBuf,
    pub rendered_figures: Vec<PathBuf>,
    pub manifest: PathBuf,
}

fn num(x: f64) -> String {
    format!("{x}")
}

fn csv_string(header: &[String], rows: &[Vec<String>]) -> String {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(vec![]);
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(row).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub const STATS_HEADER: [&str; 7] = [
    "question_id",
    "category",
    "n_valid",
    "n_invalid",
    "accuracy",
    "error_rate",
    "entropy",
];

pub fn stats_csv(stats: &[QuestionStats]) -> String {
    let rows: Vec<Vec<String>> = stats
        .iter()
        .map(|s| {
            vec![
                s.question_id.clone(),
                s.category.to_string(),
                s.n_valid.to_string(),
                s.n_invalid.to_string(),
                num(s.accuracy),
                num(s.error_rate),
                num(s.entropy),
            ]
        })
        .collect();
    csv_string(&strings(&STATS_HEADER), &rows)
}

/// Reads a table written by [`stats_csv`].
pub fn parse_stats_csv(text: &str) -> Result<Vec<QuestionStats>, ReportError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let bad = |message: String| ReportError::Parse { line, message };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != STATS_HEADER.len() {
            return Err(bad(format!("expected {} fields", STATS_HEADER.len())));
        }
        let f = |k: usize| rec[k].parse::<f64>().map_err(|e| bad(e.to_string()));
        let u = |k: usize| rec[k].parse::<u32>().map_err(|e| bad(e.to_string()));
        out.push(QuestionStats {
            question_id: rec[0].to_string(),
            category: rec[1].parse().map_err(|c| bad(format!("unknown category {c}")))?,
            n_valid: u(2)?,
            n_invalid: u(3)?,
            accuracy: f(4)?,
            error_rate: f(5)?,
            entropy: f(6)?,
        });
    }
    Ok(out)
}

pub fn histogram_1d_csv(h: &Histogram1D) -> String {
    let rows: Vec<Vec<String>> = h
        .edges
        .windows(2)
        .zip(&h.counts)
        .map(|(w, c)| vec![num(w[0]), num(w[1]), c.to_string()])
        .collect();
    csv_string(&strings(&["bin_lo", "bin_hi", "count"]), &rows)
}

/// Rows are error-rate bins, columns entropy bins.
pub fn histogram_2d_csv(h: &Histogram2D) -> String {
    let mut header = strings(&["error_rate_lo", "error_rate_hi"]);
    header.extend(h.y_edges.windows(2).map(|w| format!("entropy[{}:{}]", num(w[0]), num(w[1]))));
    let rows: Vec<Vec<String>> = h
        .x_edges
        .windows(2)
        .zip(&h.counts)
        .map(|(w, row)| {
            let mut r = vec![num(w[0]), num(w[1])];
            r.extend(row.iter().map(u64::to_string));
            r
        })
        .collect();
    csv_string(&header, &rows)
}

pub fn category_summary_csv(agg: &BTreeMap<Category, CategorySummary>) -> String {
    let opt = |x: Option<f64>| x.map(num).unwrap_or_default();
    let rows: Vec<Vec<String>> = agg
        .iter()
        .map(|(c, s)| {
            vec![
                c.to_string(),
                c.display_name().to_string(),
                s.n.to_string(),
                opt(s.mean_accuracy),
                opt(s.mean_entropy),
            ]
        })
        .collect();
    csv_string(
        &strings(&["category", "name", "n", "mean_accuracy", "mean_entropy"]),
        &rows,
    )
}

/// Binary-curve samples followed by every question's point and its
/// deviation from the curve at the same error rate.
pub fn curve_overlay_csv(stats: &[QuestionStats], curve_points: usize) -> String {
    let mut rows = Vec::new();
    for (e, h) in curve_grid(&CurveParams::binary(), curve_points) {
        rows.push(vec!["curve".into(), String::new(), num(e), num(h), num(h), num(0.0)]);
    }
    for s in stats {
        let eq1 = binary_entropy(s.error_rate);
        rows.push(vec![
            "point".into(),
            s.question_id.clone(),
            num(s.error_rate),
            num(s.entropy),
            num(eq1),
            num(s.entropy - eq1),
        ]);
    }
    csv_string(
        &strings(&["series", "question_id", "error_rate", "entropy", "binary_curve_entropy", "deviation"]),
        &rows,
    )
}

/// Sampled curve family for the `curves` subcommand.
pub fn curves_csv(families: &[CurveParams], grid_size: usize) -> String {
    let mut rows = Vec::new();
    for p in families {
        let masses: Vec<String> = (0..3)
            .map(|i| p.incorrect_masses().get(i).copied().map(num).unwrap_or_default())
            .collect();
        for (e, h) in curve_grid(p, grid_size) {
            let mut row = vec![p.order().to_string()];
            row.extend(masses.iter().cloned());
            row.push(num(e));
            row.push(num(h));
            rows.push(row);
        }
    }
    csv_string(
        &strings(&["order", "p_i1", "p_i2", "p_i3", "error_rate", "entropy"]),
        &rows,
    )
}

// ---------------------------------------------------------------------------
// SVG

const RAMP: [(f64, (u8, u8, u8)); 5] = [
    (0.0, (68, 1, 84)),
    (0.25, (59, 82, 139)),
    (0.5, (33, 145, 140)),
    (0.75, (94, 201, 98)),
    (1.0, (253, 231, 37)),
];

fn ramp(t: f64) -> String {
    let t = t.clamp(0.0, 1.0);
    let i = RAMP.iter().position(|(s, _)| *s >= t).unwrap_or(RAMP.len() - 1).max(1);
    let (s0, c0) = RAMP[i - 1];
    let (s1, c1) = RAMP[i];
    let f = (t - s0) / (s1 - s0);
    let mix = |a: u8, b: u8| (a as f64 + (b as f64 - a as f64) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(c0.0, c1.0), mix(c0.1, c1.1), mix(c0.2, c1.2))
}

struct Svg {
    body: String,
    width: f64,
    height: f64,
}

impl Svg {
    fn new(width: f64, height: f64) -> Self {
        Self {
            body: String::new(),
            width,
            height,
        }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, fill: &str, stroke: Option<&str>) {
        let stroke = stroke.map(|s| format!(r#" stroke="{s}" stroke-width="0.5""#)).unwrap_or_default();
        let _ = writeln!(
            self.body,
            r#"<rect x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{fill}"{stroke}/>"#
        );
    }

    fn line(&mut self, x1: f64, y1: f64, x2: f64, y2: f64) {
        let _ = writeln!(
            self.body,
            r##"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="#333" stroke-width="1"/>"##
        );
    }

    fn text(&mut self, x: f64, y: f64, size: f64, anchor: &str, content: &str) {
        let escaped = content.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;");
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif" text-anchor="{anchor}">{escaped}</text>"#
        );
    }

    fn vtext(&mut self, x: f64, y: f64, size: f64, content: &str) {
        let _ = writeln!(
            self.body,
            r#"<text x="{x:.2}" y="{y:.2}" font-size="{size}" font-family="sans-serif" text-anchor="middle" transform="rotate(-90 {x:.2} {y:.2})">{content}</text>"#
        );
    }

    fn polyline(&mut self, points: &[(f64, f64)], color: &str) {
        let pts: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
        let _ = writeln!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
    }

    fn circle(&mut self, x: f64, y: f64, r: f64, color: &str) {
        let _ = writeln!(
            self.body,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="{r}" fill="none" stroke="{color}" stroke-width="1"/>"#
        );
    }

    fn finish(self) -> String {
        format!(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n{}</svg>\n",
            self.body,
            w = self.width,
            h = self.height
        )
    }
}

/// Plot area in pixels.
#[derive(Clone, Copy)]
struct Frame {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl Frame {
    fn px(&self, t: f64) -> f64 {
        self.x + t * self.w
    }

    /// `t = 0` at the bottom.
    fn py(&self, t: f64) -> f64 {
        self.y + (1.0 - t) * self.h
    }
}

fn axes(svg: &mut Svg, f: Frame, x_label: &str, y_label: &str, x_max: f64, y_max: f64, size: f64) {
    svg.line(f.x, f.y + f.h, f.x + f.w, f.y + f.h);
    svg.line(f.x, f.y, f.x, f.y + f.h);
    for k in 0..=4 {
        let t = k as f64 / 4.0;
        svg.line(f.px(t), f.y + f.h, f.px(t), f.y + f.h + 4.0);
        svg.text(f.px(t), f.y + f.h + 6.0 + size, size, "middle", &format!("{:.2}", t * x_max));
        svg.line(f.x - 4.0, f.py(t), f.x, f.py(t));
        svg.text(f.x - 6.0, f.py(t) + size / 3.0, size, "end", &format!("{:.2}", t * y_max));
    }
    svg.text(f.x + f.w / 2.0, f.y + f.h + 2.5 * size + 8.0, size + 1.0, "middle", x_label);
    svg.vtext(f.x - 3.2 * size - 6.0, f.y + f.h / 2.0, size + 1.0, y_label);
}

fn span(edges: &[f64]) -> (f64, f64) {
    (edges[0], edges[edges.len() - 1])
}

/// Heatmap with entropy on the horizontal axis and error rate vertical.
fn draw_joint(svg: &mut Svg, f: Frame, h: &Histogram2D, counts_text: bool, font: f64) {
    let (y0, y1) = span(&h.x_edges);
    let (x0, x1) = span(&h.y_edges);
    let max = h.max_count().max(1) as f64;
    for (i, row) in h.counts.iter().enumerate() {
        let (elo, ehi) = ((h.x_edges[i] - y0) / (y1 - y0), (h.x_edges[i + 1] - y0) / (y1 - y0));
        for (j, &c) in row.iter().enumerate() {
            let (hlo, hhi) = ((h.y_edges[j] - x0) / (x1 - x0), (h.y_edges[j + 1] - x0) / (x1 - x0));
            let (px, py) = (f.px(hlo), f.py(ehi));
            let (w, hh) = (f.px(hhi) - px, f.py(elo) - py);
            let fill = if c == 0 { "#f4f4f4".to_string() } else { ramp(c as f64 / max) };
            svg.rect(px, py, w, hh, &fill, Some("#ffffff"));
            if counts_text && c > 0 {
                svg.text(px + w / 2.0, py + hh / 2.0 + font / 3.0, font, "middle", &c.to_string());
            }
        }
    }
    axes(svg, f, "Entropy (nats)", "Error rate (1 - accuracy)", x1, y1, font.max(9.0));
}

fn overlay_binary_curve(svg: &mut Svg, f: Frame, entropy_max: f64, points: usize) {
    let pts: Vec<(f64, f64)> = curve_grid(&CurveParams::binary(), points)
        .into_iter()
        .map(|(e, h)| (f.px(h / entropy_max), f.py(e)))
        .collect();
    svg.polyline(&pts, "#d62728");
}

pub fn render_entropy_histogram(h: &Histogram1D, title: &str) -> String {
    let mut svg = Svg::new(640.0, 420.0);
    let f = Frame { x: 70.0, y: 40.0, w: 540.0, h: 310.0 };
    svg.text(320.0, 24.0, 15.0, "middle", title);
    let (lo, hi) = span(&h.edges);
    let max = h.counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    for (w, &c) in h.edges.windows(2).zip(&h.counts) {
        let (a, b) = ((w[0] - lo) / (hi - lo), (w[1] - lo) / (hi - lo));
        let top = f.py(c as f64 / max);
        svg.rect(f.px(a), top, f.px(b) - f.px(a), f.y + f.h - top, "#3b528b", Some("#ffffff"));
    }
    axes(&mut svg, f, "Entropy (nats)", "Questions", hi, max, 10.0);
    svg.finish()
}

pub fn render_joint_histogram(
    h: &Histogram2D,
    title: &str,
    counts_text: bool,
    overlay: Option<(&[QuestionStats], usize)>,
) -> String {
    let mut svg = Svg::new(640.0, 520.0);
    let f = Frame { x: 80.0, y: 40.0, w: 520.0, h: 400.0 };
    svg.text(320.0, 24.0, 15.0, "middle", title);
    draw_joint(&mut svg, f, h, counts_text, 10.0);
    if let Some((stats, points)) = overlay {
        let (_, hmax) = span(&h.y_edges);
        overlay_binary_curve(&mut svg, f, hmax, points);
        for s in stats {
            svg.circle(f.px(s.entropy / hmax), f.py(s.error_rate), 3.0, "#d62728");
        }
    }
    svg.finish()
}

pub fn render_category_grid(agg: &BTreeMap<Category, CategorySummary>, title: &str) -> String {
    let (pw, ph) = (300.0, 260.0);
    let mut svg = Svg::new(3.0 * pw, 2.0 * ph + 30.0);
    svg.text(1.5 * pw, 20.0, 15.0, "middle", title);
    for (k, (cat, s)) in agg.iter().enumerate() {
        let (col, row) = ((k % 3) as f64, (k / 3) as f64);
        let f = Frame {
            x: col * pw + 70.0,
            y: 30.0 + row * ph + 30.0,
            w: pw - 90.0,
            h: ph - 90.0,
        };
        svg.text(f.x + f.w / 2.0, f.y - 8.0, 11.0, "middle", &format!("{cat}: {} (n={})", cat.display_name(), s.n));
        draw_joint(&mut svg, f, &s.histogram, false, 8.0);
    }
    svg.finish()
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ReportMeta {
    pub model: String,
    pub dataset_digest: String,
    pub repetitions: u32,
    pub config: serde_json::Value,
    /// Timestamp of the newest sample the report was built from, so that
    /// regenerating from an unchanged store yields identical bytes.
    pub latest_sample_at: Option<chrono::DateTime<chrono::Utc>>,
}

#[derive(Serialize)]
struct ReportManifest<'a> {
    #[serde(flatten)]
    meta: &'a ReportMeta,
    questions_with_stats: usize,
    flagged_questions: &'a [String],
    entropy_out_of_range: u64,
    joint_out_of_range: u64,
    bundle: &'a ReportBundle,
}

fn write(path: &Path, contents: &str) -> Result<PathBuf, ReportError> {
    std::fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

/// Writes every table and figure into `out_dir`.
pub fn write_report(
    stats: &[QuestionStats],
    flagged: &[String],
    cfg: &ReportConfig,
    meta: &ReportMeta,
    out_dir: &Path,
) -> Result<ReportBundle, ReportError> {
    std::fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let entropy_edges = uniform_edges(0.0, max_entropy(), cfg.entropy_bins);
    let error_edges = uniform_edges(0.0, 1.0, cfg.error_bins);

    let entropies: Vec<f64> = stats.iter().map(|s| s.entropy).collect();
    let points: Vec<(f64, f64)> = stats.iter().map(|s| (s.error_rate, s.entropy)).collect();
    let h1 = histogram_1d(&entropies, &entropy_edges)?;
    let h2 = histogram_2d(&points, &error_edges, &entropy_edges)?;
    let agg = aggregate_by_category(stats, &error_edges, &entropy_edges)?;

    let p = |name: &str| out_dir.join(name);
    let stats_csv = write(&p("stats.csv"), &stats_csv(stats))?;
    let entropy_hist_csv = write(&p("entropy_hist.csv"), &histogram_1d_csv(&h1))?;
    let joint_hist_csv = write(&p("joint_hist.csv"), &histogram_2d_csv(&h2))?;
    let mut category_csvs = BTreeMap::new();
    for (cat, s) in &agg {
        let path = write(&p(&format!("category_{cat}.csv")), &histogram_2d_csv(&s.histogram))?;
        category_csvs.insert(*cat, path);
    }
    let category_summary_csv = write(&p("category_summary.csv"), &category_summary_csv(&agg))?;
    let curve_overlay_csv = write(&p("curve_overlay.csv"), &curve_overlay_csv(stats, cfg.curve_points))?;

    let model = &meta.model;
    let rendered_figures = vec![
        write(
            &p("entropy_hist.svg"),
            &render_entropy_histogram(&h1, &format!("{model}: entropy of answers per question")),
        )?,
        write(
            &p("joint_hist.svg"),
            &render_joint_histogram(&h2, &format!("{model}: error rate vs entropy (counts per bin)"), true, None),
        )?,
        write(
            &p("categories.svg"),
            &render_category_grid(&agg, &format!("{model}: error rate vs entropy by category")),
        )?,
        write(
            &p("joint_hist_overlay.svg"),
            &render_joint_histogram(
                &h2,
                &format!("{model}: error rate vs entropy with two-reply curve"),
                false,
                Some((stats, cfg.curve_points)),
            ),
        )?,
    ];

    let mut bundle = ReportBundle {
        stats_csv,
        entropy_hist_csv,
        joint_hist_csv,
        category_csvs,
        category_summary_csv,
        curve_overlay_csv,
        rendered_figures,
        manifest: p("report_manifest.json"),
    };
    let manifest = ReportManifest {
        meta,
        questions_with_stats: stats.len(),
        flagged_questions: flagged,
        entropy_out_of_range: h1.out_of_range,
        joint_out_of_range: h2.out_of_range,
        bundle: &bundle,
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    bundle.manifest = write(&bundle.manifest, &text)?;
    Ok(bundle)
}
