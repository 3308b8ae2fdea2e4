# Regenerates entropy_oracle_n20.csv: plug-in entropy (nats) of every
# partition of 20 into at most five parts, evaluated at 60 digits.
import mpmath

mpmath.mp.dps = 60


def partitions(n, k, cap):
    if k == 0:
        if n == 0:
            yield ()
        return
    for first in range(min(n, cap), -1, -1):
        for rest in partitions(n - first, k - 1, first):
            yield (first,) + rest


print("c1,c2,c3,c4,c5,entropy")
for p in partitions(20, 5, 20):
    h = mpmath.mpf(0)
    for c in p:
        if c:
            q = mpmath.mpf(c) / 20
            h -= q * mpmath.log(q)
    print(",".join(map(str, p)) + "," + mpmath.nstr(h, 30, strip_zeros=False))
