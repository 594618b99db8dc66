"""Pure-numpy semi-global alignment kernel (fallback when the compiled one is absent).

The query must be consumed in full; utterance symbols before the first and
after the last aligned column are free. Row recurrence

    H[i][j] = max(H[i-1][j-1] + s(q_i, u_j), H[i-1][j] + gap, H[i][j-1] + gap)

with H[0][j] = 0 and H[i][0] = i * gap; the result is max_j H[m][j].
The in-row left-gap scan is a max-plus prefix sum, vectorised as a running
maximum of (candidate - gap*j).
"""

from __future__ import annotations

import numpy as np


def semiglobal_score(query: np.ndarray, utt: np.ndarray,
                     match: float, mismatch: float, gap: float) -> float:
    """Raw (unnormalised) optimal semi-global alignment score."""
    query = np.asarray(query)
    utt = np.asarray(utt)
    m = query.shape[0]
    n = utt.shape[0]
    if n == 0:
        return float(m * gap)
    prev = np.zeros(n + 1)
    offs = gap * np.arange(n + 1)
    cand = np.empty(n + 1)
    for i in range(1, m + 1):
        sub = np.where(utt == query[i - 1], match, mismatch)
        cand[0] = i * gap
        np.maximum(prev[:-1] + sub, prev[1:] + gap, out=cand[1:])
        prev = np.maximum.accumulate(cand - offs) + offs
    return float(prev.max())
