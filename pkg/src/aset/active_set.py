"""Active-set feature discovery, shallow (bands only) and hierarchical.

Starting from a classifier on the original bands, each iteration scores a
minibatch of random filters by how much they violate the optimality
conditions of the current fit, and adds the worst violator when its score is
positive. In hierarchical mode every accepted feature also becomes an input
band for later filters, with a regularization weight growing with depth.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import numpy as np

from .errors import FileFormatError, MissingClassError, UnknownBandError, ZeroVarianceError
from .evaluation import confusion, kappa
from .filters import materialize_many
from .filters.descriptor import BAND_KIND, FeatureDescriptor, to_text
from .filters.sampler import SamplerConfig, sample_minibatch
from .glasso import DEFAULT_EPSILON, ModelState, fit, objective, predict, violation_scores
from .tensor import (
    BandMeta, FeatureMatrix, ImageCube, LabeledSamples, apply_normalization, extract_column,
    normalize_column,
)

log = logging.getLogger(__name__)

MODES = ("shallow", "hierarchical")


@dataclass(frozen=True)
class RunConfig:
    mode: str = "shallow"
    lam: float = 1e-3
    gamma0: float = 1.1
    epsilon: float = DEFAULT_EPSILON
    max_iterations: int = 100
    minibatch_uses: int = 2
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.lam <= 0 or self.epsilon <= 0:
            raise ValueError("lambda and epsilon must be positive")
        if self.gamma0 < 1:
            raise ValueError("gamma0 must be >= 1")
        if self.max_iterations < 0 or self.minibatch_uses < 1:
            raise ValueError("invalid iteration settings")


@dataclass
class TraceRecord:
    iteration: int
    objective: float
    active_count: int
    accepted_descriptor: str = ""
    best_violation: float = math.nan
    kappa_on_holdout: float | None = None


TRACE_COLUMNS = ("iteration", "objective", "active_count", "accepted_descriptor",
                 "best_violation", "kappa_on_holdout")


@dataclass
class RunTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def column(self, name: str) -> list:
        return [getattr(r, name) for r in self.records]

    def write(self, path) -> None:
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh, delimiter="\t", lineterminator="\n")
            out.writerow(TRACE_COLUMNS)
            for r in self.records:
                out.writerow([r.iteration, repr(r.objective), r.active_count, r.accepted_descriptor,
                              repr(r.best_violation),
                              "" if r.kappa_on_holdout is None else repr(r.kappa_on_holdout)])

    @classmethod
    def read(cls, path) -> "RunTrace":
        records = []
        with open(path, newline="") as fh:
            rows = csv.reader(fh, delimiter="\t")
            header = next(rows, None)
            if header is None or tuple(header) != TRACE_COLUMNS:
                raise FileFormatError(f"unexpected trace header {header}")
            for row in rows:
                try:
                    it, obj, count, acc, viol, kap = row
                    records.append(TraceRecord(int(it), float(obj), int(count), acc, float(viol),
                                               None if kap == "" else float(kap)))
                except ValueError as exc:
                    raise FileFormatError(f"corrupt trace row {row}: {exc}") from None
        return cls(records)


@dataclass
class RunResult:
    """Outcome of :func:`run`; unpacks as ``(state, trace)``."""

    state: ModelState
    trace: RunTrace
    bank: ImageCube
    features: dict
    acceptances: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.state, self.trace))


def depth_gamma(h: int, gamma0: float) -> float:
    """Regularization weight ``gamma0 ** h`` of a feature of depth ``h``.

    The power is taken in decimal on the shortest repr of ``gamma0`` and
    rounded once, so ``depth_gamma(2, 1.1) == 1.21`` holds exactly (binary
    ``1.1 ** 2`` is ``1.2100000000000002``).
    """
    if h < 0:
        raise ValueError("depth must be non-negative")
    return float(Decimal(repr(float(gamma0))) ** int(h))


def depth_of(desc: FeatureDescriptor, bank: ImageCube) -> int:
    """Depth of ``desc`` given the depths of its input bands in ``bank``."""
    for band_id in desc.inputs:
        if band_id not in bank:
            raise UnknownBandError(f"unknown parent band {band_id}")
    if desc.kind == BAND_KIND:
        return bank.depth(desc.input_a)
    return max(bank.depth(i) for i in desc.inputs) + 1


def depth_histogram(state: ModelState, bank: ImageCube | None = None) -> tuple[dict, dict]:
    """Counts by depth over the active set and over the input bank."""
    active: dict[int, int] = {}
    for desc in state.descriptors:
        active[desc.depth] = active.get(desc.depth, 0) + 1
    banked: dict[int, int] = {}
    if bank is not None:
        for bid in bank.band_ids:
            h = bank.depth(bid)
            banked[h] = banked.get(h, 0) + 1
    return dict(sorted(active.items())), dict(sorted(banked.items()))


@dataclass
class _Candidate:
    desc: FeatureDescriptor
    band: np.ndarray
    column: np.ndarray
    mean: float
    norm: float
    gamma: float


class _Runner:
    def __init__(self, cube: ImageCube, train: LabeledSamples, config: RunConfig,
                 holdout: LabeledSamples | None):
        missing = train.missing_classes()
        if missing:
            raise MissingClassError(f"training samples lack classes {missing}")
        train.check_bounds(cube.shape)
        self.config = config
        self.train = train
        self.y = train.labels
        self.holdout = holdout
        self.rng = np.random.default_rng(config.seed)
        self.bank = cube
        self.bank_ids: dict[FeatureDescriptor, int] = {}
        self.features: dict[FeatureDescriptor, np.ndarray] = {}
        # the fit must be tighter than the acceptance margin so that copies of
        # active features can never score positive
        self.tol_kkt = min(1e-6, 0.1 * config.epsilon)

    # -- helpers ----------------------------------------------------------------

    def gamma_for(self, depth: int) -> float:
        if self.config.mode == "shallow":
            return 1.0
        return depth_gamma(depth, self.config.gamma0)

    def _fit(self, phi: FeatureMatrix, gammas: np.ndarray, warm: ModelState | None):
        state, report = fit(phi, self.y, self.config.lam, gammas, warm,
                            n_classes=self.train.n_classes, epsilon=self.config.epsilon,
                            tol_kkt=self.tol_kkt)
        if not report.converged:
            log.warning("fit stopped at kkt %.2e; retrying from its own iterate",
                        report.kkt_violation)
            state, report = fit(phi, self.y, self.config.lam, gammas, state,
                                n_classes=self.train.n_classes, epsilon=self.config.epsilon,
                                tol_kkt=self.tol_kkt, max_iter=50000)
        return state

    def _prune(self, phi: FeatureMatrix, state: ModelState):
        keep = np.flatnonzero(state.row_norms() > 0)
        if keep.size == phi.n_features:
            return phi, state
        return phi.keep(keep), state.keep(keep)

    def holdout_kappa(self, state: ModelState) -> float | None:
        if self.holdout is None or len(self.holdout) == 0:
            return None
        h = self.holdout
        cols = [apply_normalization(self.features[d][h.rows, h.cols], state.means[j], state.norms[j])
                for j, d in enumerate(state.descriptors)]
        X = np.column_stack(cols) if cols else np.zeros((len(h), 0))
        labels, _ = predict(state, X)
        return kappa(confusion(h.labels, labels, h.n_classes))

    def candidates(self, descs: list[FeatureDescriptor]) -> list[_Candidate]:
        bands = materialize_many(self.bank, descs, self.config.sampler.entropy_bins)
        out = []
        for desc, band in zip(descs, bands):
            raw = band[self.train.rows, self.train.cols]
            try:
                col, mean, norm = normalize_column(raw)
            except ZeroVarianceError:
                continue
            out.append(_Candidate(desc, band, col, mean, norm, self.gamma_for(desc.depth)))
        return out

    def bank_add(self, cand: _Candidate) -> None:
        if self.config.mode != "hierarchical" or cand.desc in self.bank_ids:
            return
        bid = self.bank.next_id()
        self.bank = self.bank.with_band(cand.band, BandMeta(bid, "derived", cand.desc.depth))
        self.bank_ids[cand.desc] = bid

    def _needed_bank(self, state: ModelState) -> dict[int, FeatureDescriptor]:
        """Derived bands the active features depend on, directly or not."""
        by_id = {bid: desc for desc, bid in self.bank_ids.items()}
        needed: dict[int, FeatureDescriptor] = {}
        stack = [i for d in state.descriptors for i in d.inputs]
        while stack:
            bid = stack.pop()
            if bid in by_id and bid not in needed:
                needed[bid] = by_id[bid]
                stack.extend(by_id[bid].inputs)
        return dict(sorted(needed.items()))

    # -- main loop --------------------------------------------------------------

    def run(self) -> RunResult:
        cfg = self.config
        phi = FeatureMatrix.empty(len(self.train))
        gammas = []
        for bid in self.bank.original_ids():
            desc = FeatureDescriptor.band(bid)
            try:
                col, mean, norm = normalize_column(extract_column(self.bank, bid, self.train))
            except ZeroVarianceError:
                continue
            phi = phi.append(col, desc, mean, norm)
            gammas.append(self.gamma_for(0))
            self.features[desc] = self.bank.band(bid)
        state = self._fit(phi, np.array(gammas), None)
        phi, state = self._prune(phi, state)
        obj = objective(state, phi, self.y)
        trace = RunTrace([TraceRecord(0, obj, phi.n_features,
                                      kappa_on_holdout=self.holdout_kappa(state))])
        acceptances = []

        batch: list[_Candidate] = []
        uses_left = 0
        for it in range(1, cfg.max_iterations + 1):
            if uses_left == 0 or not batch:
                descs = sample_minibatch(self.rng, self.bank, cfg.sampler, set(phi.descriptors))
                batch = self.candidates(descs)
                uses_left = cfg.minibatch_uses
            batch = [c for c in batch if c.desc not in phi.descriptors]
            uses_left -= 1
            record = TraceRecord(it, obj, phi.n_features)
            if batch:
                scores = violation_scores(state, phi, self.y,
                                          np.column_stack([c.column for c in batch]),
                                          np.array([c.gamma for c in batch]))
                best = int(np.argmax(scores))
                record.best_violation = float(scores[best])
                if scores[best] > 0:
                    cand = batch.pop(best)
                    before = obj
                    phi = phi.append(cand.column, cand.desc, cand.mean, cand.norm)
                    gam = np.append(state.gamma, cand.gamma)
                    state = self._fit(phi, gam, state)
                    obj = objective(state, phi, self.y)
                    phi, state = self._prune(phi, state)
                    self.features[cand.desc] = cand.band
                    self.bank_add(cand)
                    acceptances.append({"iteration": it, "descriptor": cand.desc,
                                        "score": float(scores[best]),
                                        "objective_before": before, "objective_after": obj})
                    record.accepted_descriptor = to_text(cand.desc)
                    record.objective = obj
                    record.active_count = phi.n_features
                else:
                    # nothing changed, so rescoring the same batch would be pointless
                    uses_left = 0
            record.kappa_on_holdout = self.holdout_kappa(state)
            trace.records.append(record)
            log.debug("iter %d obj %.6f active %d accepted %s", it, obj, phi.n_features,
                      record.accepted_descriptor or "-")

        state.bank = self._needed_bank(state)
        return RunResult(state, trace, self.bank,
                         {d: self.features[d] for d in state.descriptors}, acceptances)


def run(cube: ImageCube, train: LabeledSamples, config: RunConfig = RunConfig(),
        holdout: LabeledSamples | None = None) -> RunResult:
    """Run active-set feature discovery.

    Returns a :class:`RunResult`, which unpacks as ``(state, trace)``.
    ``max_iterations = 0`` yields the classifier on the original bands only.
    """
    return _Runner(cube, train, config, holdout).run()


def write_trace(trace: RunTrace, path: str | Path) -> None:
    trace.write(path)


def read_trace(path: str | Path) -> RunTrace:
    return RunTrace.read(path)
