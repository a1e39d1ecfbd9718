"""Loop-based reference implementations shared by several test files."""
import math


def brute_force_sinr(gains, association, served, p_t, noise):
    """Per-link oracle that loops over every transmitter explicitly."""
    I, J = len(gains), len(gains[0])
    rates = [0.0] * J
    sinrs = [0.0] * J
    for j in range(J):
        own = association[j]
        signal = gains[own][j] * p_t
        interference = 0.0
        for i in range(I):
            if i != own and served[i] >= 0:
                interference += gains[i][j] * p_t
        sinrs[j] = signal / (interference + noise)
        if served[own] == j:
            rates[j] = math.log2(1.0 + sinrs[j])
    return sinrs, rates


def threshold_scan(values):
    """Largest candidate C such that at least 95% of the values are >= C."""
    vals = list(values)
    n = len(vals)
    best = None
    for c in vals:
        at_least = sum(1 for v in vals if v >= c)
        if at_least * 100 >= 95 * n and (best is None or c > best):
            best = c
    return best
