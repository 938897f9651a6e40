"""Experiment orchestration: adversary runs, replays, and result files.

An adversary experiment wires a germ-facing algorithm to the resisting
oracle, materializes the hard function afterwards, replays the algorithm
against the real local oracle to confirm indistinguishability, and certifies
approximate stationarity at every iterate.  Frozen experiments run against a
fixed function instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algorithms import (
    GERM_ZOO,
    Algorithm,
    RunResult,
    goldstein_conceptual,
    gradient_sampling,
    gzr_check,
    make_algorithm,
    run_germ_algorithm,
)
from .constructions import HARDNESS_CONSTANT, ResistingParams, build_H
from .oracle import (
    AdversaryConfig,
    Transcript,
    adversary_answer,
    local_oracle,
    materialize,
    transcript_to_text,
)
from .pa_core import MaxMinFunction, function_from_text, function_to_text
from .subdiff import certify_gas

HARDNESS_SLACK = 1e-8
_MODES = ("gzr", "general", "frozen")
_RUNNERS = ("goldstein_conceptual", "gradient_sampling")


@dataclass(frozen=True)
class ExperimentConfig:
    """One adversary-vs-algorithm or frozen-instance run.

    Hardness modes require 0 < epsilon, delta below the lower-bound constant
    and the mode's dimension floor; frozen mode only needs positive values.
    """

    mode: str
    algorithm: str
    T: int
    d: int
    epsilon: float
    delta: float
    seed: int = 0
    algorithm_params: dict = field(default_factory=dict)
    breakpoints: tuple[float, ...] | None = None
    function_text: str | None = None
    expect: str | None = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.T < 1 or self.d < 1:
            raise ValueError("T and d must be positive")
        if self.epsilon <= 0 or self.delta <= 0:
            raise ValueError("epsilon and delta must be positive")
        if self.mode in ("gzr", "general"):
            if not (self.epsilon < HARDNESS_CONSTANT and self.delta < HARDNESS_CONSTANT):
                raise ValueError(
                    "hardness experiments need epsilon, delta below "
                    f"{HARDNESS_CONSTANT:.6f}"
                )
            if self.algorithm in _RUNNERS:
                raise ValueError(
                    f"{self.algorithm} is not germ-facing deterministic; "
                    "adversary modes accept the germ zoo only"
                )
            if self.algorithm not in GERM_ZOO:
                raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.mode == "gzr":
            if self.d < 2:
                raise ValueError("gzr mode needs d >= 2")
            if self.algorithm in GERM_ZOO and not GERM_ZOO[self.algorithm].gzr:
                raise ValueError(
                    f"{self.algorithm} is not zero-respecting; use general mode"
                )
        if self.mode == "general" and self.d < self.T + 1:
            raise ValueError("general mode needs d >= T + 1")
        if self.mode == "frozen":
            known = set(GERM_ZOO) | set(_RUNNERS)
            if self.algorithm not in known:
                raise ValueError(f"unknown algorithm {self.algorithm!r}")


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    trajectory: list[np.ndarray]
    values: list[float]
    distances: list[float]
    certified: list[bool]
    verdict: str
    replay_verified: bool | None
    gzr_compliant: bool | None
    digest: dict
    function_text: str
    transcript_text: str | None

    @property
    def best_distance(self) -> float:
        return min(self.distances) if self.distances else math.inf

    def csv_text(self) -> str:
        lines = ["t,x1,x2,x3,f_value,gas_distance,certified"]
        for t, (x, v, dist, ok) in enumerate(
            zip(self.trajectory, self.values, self.distances, self.certified), start=1
        ):
            coords = [f"{x[i]:.17g}" if i < x.shape[0] else "" for i in range(3)]
            lines.append(
                f"{t},{coords[0]},{coords[1]},{coords[2]},"
                f"{v:.17g},{dist:.17g},{'true' if ok else 'false'}"
            )
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        c = self.config
        lines = [
            "experiment-report 1",
            f"mode {c.mode}",
            f"algorithm {c.algorithm}",
            "params " + (" ".join(f"{k}={v!r}" for k, v in sorted(c.algorithm_params.items())) or "-"),
            f"T {c.T}",
            f"d {c.d}",
            f"epsilon {c.epsilon:.17g}",
            f"delta {c.delta:.17g}",
            f"seed {c.seed}",
            f"verdict {self.verdict}",
            f"replay-verified {_tri(self.replay_verified)}",
            f"gzr-compliant {_tri(self.gzr_compliant)}",
            f"best-distance {self.best_distance:.17g}",
        ]
        for k in ("mode", "breakpoints", "sigma", "eta"):
            if k in self.digest and k != "mode":
                v = self.digest[k]
                if isinstance(v, (list, tuple)):
                    lines.append(f"{k} " + " ".join(f"{b:.17g}" for b in v))
                else:
                    lines.append(f"{k} {v:.17g}")
        for t, (x, v, dist, ok) in enumerate(
            zip(self.trajectory, self.values, self.distances, self.certified), start=1
        ):
            xs = " ".join(f"{xi:.17g}" for xi in x)
            lines.append(
                f"iterate {t} x {xs} value {v:.17g} distance {dist:.17g} "
                f"certified {'true' if ok else 'false'}"
            )
        return "\n".join(lines) + "\n"


def _tri(v: bool | None) -> str:
    return "n/a" if v is None else ("true" if v else "false")


def _verdict(distances: list[float], certified: list[bool], replay_ok: bool | None) -> str:
    hardness = (
        bool(distances)
        and min(distances) >= HARDNESS_CONSTANT - HARDNESS_SLACK
        and (replay_ok is None or replay_ok)
    )
    if hardness:
        return "hardness-reproduced"
    if any(certified):
        return "converged"
    return "algorithm-escaped"


def replay_verify(transcript: Transcript, f: MaxMinFunction, algorithm: Algorithm) -> bool:
    """Re-run a deterministic algorithm against f's local oracle.

    True when the produced query sequence equals the transcript exactly.
    """
    if not algorithm.deterministic:
        raise ValueError("replay verification only makes sense for deterministic algorithms")
    history = []
    for recorded in transcript.queries:
        x = np.asarray(algorithm.next_query(history), dtype=float)
        if not np.array_equal(x, recorded):
            return False
        view = local_oracle(f, x).view()
        history.append((x, view))
    return True


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    if config.mode in ("gzr", "general"):
        return _run_adversary(config)
    return _run_frozen(config)


def _certify_trajectory(f, trajectory, epsilon, delta):
    values, distances, certified = [], [], []
    for x in trajectory:
        cert = certify_gas(f, x, epsilon, delta)
        values.append(f.value(x))
        distances.append(cert.distance)
        certified.append(cert.satisfied)
    return values, distances, certified


def _run_adversary(config: ExperimentConfig) -> ExperimentReport:
    adv_cfg = AdversaryConfig(T=config.T, d=config.d, mode=config.mode)
    transcript = Transcript(dimension=config.d)
    algorithm = make_algorithm(config.algorithm, config.d, **config.algorithm_params)

    def answer(x):
        return adversary_answer(transcript, adv_cfg, x).view()

    queries, _ = run_germ_algorithm(answer, algorithm, config.T)
    fn, plan = materialize(transcript, adv_cfg)
    params = ResistingParams.from_queries([q[0] for q in queries], config.d)
    values, distances, certified = _certify_trajectory(
        fn, queries, config.epsilon, config.delta
    )
    replay_alg = make_algorithm(config.algorithm, config.d, **config.algorithm_params)
    replay_ok = replay_verify(transcript, fn, replay_alg)
    if algorithm.deterministic and not replay_ok:
        raise RuntimeError(
            f"replay diverged for deterministic algorithm {config.algorithm}; "
            "the implementation is not a function of its germ history"
        )
    gzr_ok = None
    if config.mode == "gzr":
        gzr_ok, _ = gzr_check(fn, queries)
    digest = {
        "mode": config.mode,
        "breakpoints": list(params.breakpoints),
        "sigma": params.sigma,
        "eta": params.eta,
    }
    return ExperimentReport(
        config=config,
        trajectory=queries,
        values=values,
        distances=distances,
        certified=certified,
        verdict=_verdict(distances, certified, replay_ok),
        replay_verified=replay_ok,
        gzr_compliant=gzr_ok,
        digest=digest,
        function_text=function_to_text(fn),
        transcript_text=transcript_to_text(transcript),
    )


def _frozen_function(config: ExperimentConfig) -> tuple[MaxMinFunction, dict]:
    if config.function_text is not None:
        fn = function_from_text(config.function_text)
        return fn, {"mode": "frozen"}
    bps = config.breakpoints if config.breakpoints else (0.0,)
    params = ResistingParams.from_queries(bps, config.d)
    fn = build_H(params)
    digest = {
        "mode": "frozen",
        "breakpoints": list(params.breakpoints),
        "sigma": params.sigma,
        "eta": params.eta,
    }
    return fn, digest


def _run_frozen(config: ExperimentConfig) -> ExperimentReport:
    fn, digest = _frozen_function(config)
    if fn.dimension != config.d:
        raise ValueError(
            f"frozen function has dimension {fn.dimension}, config says {config.d}"
        )
    replay_ok: bool | None = None
    if config.algorithm in GERM_ZOO:
        algorithm = make_algorithm(config.algorithm, config.d, **config.algorithm_params)

        def answer(x):
            return local_oracle(fn, x).view()

        queries, _ = run_germ_algorithm(answer, algorithm, config.T)
        trajectory = queries
        replay_alg = make_algorithm(config.algorithm, config.d, **config.algorithm_params)
        t = Transcript(dimension=config.d)
        for q in queries:
            t.append(q, local_oracle(fn, q).view())
        replay_ok = replay_verify(t, fn, replay_alg)
    elif config.algorithm == "goldstein_conceptual":
        run = goldstein_conceptual(
            fn, np.zeros(config.d), config.epsilon, config.delta, max_steps=config.T
        )
        trajectory = run.trajectory
    else:
        params = dict(config.algorithm_params)
        params.setdefault("samples", 20)
        run = gradient_sampling(
            fn,
            np.zeros(config.d),
            config.delta,
            params["samples"],
            config.epsilon,
            max_steps=config.T,
            seed=config.seed,
        )
        trajectory = run.trajectory
    values, distances, certified = _certify_trajectory(
        fn, trajectory, config.epsilon, config.delta
    )
    return ExperimentReport(
        config=config,
        trajectory=trajectory,
        values=values,
        distances=distances,
        certified=certified,
        verdict=_verdict(distances, certified, replay_ok),
        replay_verified=replay_ok,
        gzr_compliant=None,
        digest=digest,
        function_text=function_to_text(fn),
        transcript_text=None,
    )


def emit_results(
    report: ExperimentReport, fmt: str = "both", out_dir: str | Path = "."
) -> list[Path]:
    """Write results.csv and/or report.txt (plus function and transcript).

    Overwrites idempotently; wraps I/O failures with the offending path.
    """
    out = Path(out_dir)
    written: list[Path] = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if fmt in ("csv", "both"):
            p = out / "results.csv"
            p.write_text(report.csv_text())
            written.append(p)
        if fmt in ("structured-text", "text", "both"):
            p = out / "report.txt"
            p.write_text(report.to_text())
            written.append(p)
        p = out / "function.txt"
        p.write_text(report.function_text)
        written.append(p)
        if report.transcript_text is not None:
            p = out / "transcript.txt"
            p.write_text(report.transcript_text)
            written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write results under {out}: {exc}") from exc
    return written
