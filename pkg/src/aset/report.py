"""Text reports built from a saved model and its run trace."""

from __future__ import annotations

import numpy as np

from .active_set import RunTrace
from .filters.descriptor import to_text
from .glasso import ModelState


def weight_rows(state: ModelState) -> list[dict]:
    """One entry per feature: descriptor, depth, row norm and per-class weights."""
    norms = state.row_norms()
    rows = []
    for j, desc in enumerate(state.descriptors):
        w = state.W[j]
        peak = np.max(np.abs(w))
        rows.append({
            "index": j,
            "descriptor": to_text(desc),
            "depth": desc.depth,
            "row_norm": float(norms[j]),
            "weights": w.tolist(),
            # share of the strongest class weight reached by each class
            "activity": (np.abs(w) / peak).tolist() if peak > 0 else [0.0] * w.size,
        })
    return rows


def top_features(state: ModelState, k: int = 6) -> list[tuple[str, float]]:
    """The ``k`` nonzero rows with the largest squared norm, strongest first."""
    sq = np.sum(state.W ** 2, axis=1)
    order = sorted((j for j in range(state.n_features) if sq[j] > 0), key=lambda j: (-sq[j], j))
    return [(to_text(state.descriptors[j]), float(sq[j])) for j in order[:k]]


def depth_counts(state: ModelState) -> dict[int, int]:
    counts: dict[int, int] = {}
    for desc in state.descriptors:
        counts[desc.depth] = counts.get(desc.depth, 0) + 1
    return dict(sorted(counts.items()))


def render(state: ModelState, trace: RunTrace | None, k: int = 6) -> str:
    C = state.n_classes
    out = ["# series", "iteration\tobjective\tactive_count\tkappa_on_holdout"]
    if trace is not None:
        for r in trace:
            kap = "" if r.kappa_on_holdout is None else f"{r.kappa_on_holdout:.6f}"
            out.append(f"{r.iteration}\t{r.objective:.10g}\t{r.active_count}\t{kap}")

    out += ["", "# weights",
            "index\tdescriptor\tdepth\trow_norm\t"
            + "\t".join(f"w_{c}" for c in range(1, C + 1)) + "\t"
            + "\t".join(f"activity_{c}" for c in range(1, C + 1))]
    for row in weight_rows(state):
        out.append("\t".join([str(row["index"]), row["descriptor"], str(row["depth"]),
                              repr(row["row_norm"])]
                             + [repr(v) for v in row["weights"]]
                             + [f"{v:.4f}" for v in row["activity"]]))

    out += ["", "# depth_histogram", "depth\tcount"]
    out += [f"{h}\t{n}" for h, n in depth_counts(state).items()]

    out += ["", f"# top_{k}", "rank\tdescriptor\tsquared_norm"]
    out += [f"{i}\t{d}\t{v:.10g}" for i, (d, v) in enumerate(top_features(state, k), 1)]
    return "\n".join(out) + "\n"
