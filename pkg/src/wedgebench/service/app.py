"""FastAPI service exposing the testbed: builders, certification, adversary
sessions, and experiment runs.  The CLI is a thin client of these routes.
"""

from __future__ import annotations

import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import harness
from ..algorithms import make_algorithm
from ..constructions import (
    ResistingParams,
    build_F,
    build_H,
    build_tester_f2,
    build_wedge,
    verify_lemmas,
)
from ..oracle import (
    AdversaryConfig,
    Transcript,
    adversary_answer,
    materialize,
    transcript_from_text,
    transcript_to_text,
)
from ..pa_core import (
    enumerate_pieces,
    function_from_text,
    function_to_text,
    lipschitz_certificate,
)
from ..subdiff import (
    GradientPolytope,
    certificate_to_text,
    certify_gas,
    certify_nas,
    goldstein_generators,
    min_norm_point,
    sampled_goldstein_distance,
    segment_gap_estimate,
)
from . import schemas as S

app = FastAPI(title="wedgebench", version="0.1.0")

_sessions: dict[str, tuple[AdversaryConfig, Transcript, threading.Lock]] = {}
_sessions_lock = threading.Lock()


def _fail(exc: Exception) -> HTTPException:
    return HTTPException(status_code=422, detail=str(exc))


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/functions/build", response_model=S.BuildResponse)
def build_function(req: S.BuildRequest):
    try:
        sigma = eta = None
        if req.kind == "wedge":
            if req.eta is None:
                raise ValueError("wedge needs eta")
            fn = build_wedge(req.eta)
            eta = req.eta
        elif req.kind in ("resisting", "hard"):
            bps = req.breakpoints or [0.0]
            params = ResistingParams.from_queries(bps, req.dimension, eta=req.eta)
            fn = build_F(params) if req.kind == "resisting" else build_H(params)
            sigma, eta = params.sigma, params.eta
        elif req.kind == "tester":
            if req.a is None or req.b is None:
                raise ValueError("tester needs a and b")
            fn = build_tester_f2(req.a, req.b)
        else:
            raise ValueError(f"unknown kind {req.kind!r}")
    except (ValueError, RuntimeError) as exc:
        raise _fail(exc)
    return S.BuildResponse(
        function=S.FunctionModel.from_function(fn),
        text=function_to_text(fn),
        sigma=sigma,
        eta=eta,
        lipschitz_bound=lipschitz_certificate(fn),
    )


@app.post("/functions/evaluate", response_model=S.EvaluateResponse)
def evaluate_function(req: S.EvaluateRequest):
    try:
        fn = req.function.to_function()
        vals = fn.values(np.array(req.points, dtype=float))
    except (ValueError, RuntimeError) as exc:
        raise _fail(exc)
    return S.EvaluateResponse(values=[float(v) for v in vals])


@app.post("/functions/pieces", response_model=S.PiecesResponse)
def pieces(req: S.PiecesRequest):
    try:
        fn = req.function.to_function()
        out = enumerate_pieces(fn)
    except (ValueError, RuntimeError) as exc:
        raise _fail(exc)
    return S.PiecesResponse(
        pieces=[
            S.PieceModel(
                term_index=p.term_index,
                atom_index=p.atom_index,
                gradient=p.gradient.tolist(),
                offset=p.offset,
                n_cells=len(p.cells),
                full_dimensional=p.full_dimensional,
            )
            for p in out
        ]
    )


@app.post("/subdiff/goldstein-generators", response_model=S.GeneratorsResponse)
def generators(req: S.GeneratorsRequest):
    try:
        fn = req.function.to_function()
        S_ = goldstein_generators(fn, np.array(req.point, dtype=float), req.delta)
    except (ValueError, RuntimeError) as exc:
        raise _fail(exc)
    return S.GeneratorsResponse(
        generators=S_.generators.tolist(), provenance=list(S_.provenance)
    )


@app.post("/subdiff/min-norm", response_model=S.MinNormResponse)
def min_norm(req: S.MinNormRequest):
    try:
        gens = np.array(req.generators, dtype=float)
        if gens.ndim != 2 or gens.shape[0] == 0:
            raise ValueError("need a nonempty 2D generator array")
        dist, w = min_norm_point(gens)
    except (ValueError, RuntimeError) as exc:
        raise _fail(exc)
    return S.MinNormResponse(distance=dist, weights=w.tolist())


@app.post("/subdiff/certify", response_model=S.CertificateModel)
def certify(req: S.CertifyRequest):
    try:
        fn = req.function.to_function()
        x = np.array(req.point, dtype=float)
        if req.kind == "gas":
            cert = certify_gas(fn, x, req.epsilon, req.delta)
        elif req.kind == "nas":
            cert = certify_nas(fn, x, req.epsilon, req.delta)
        else:
            raise ValueError(f"unknown certificate kind {req.kind!r}")
    except (ValueError, RuntimeError) as exc:
        raise _fail(exc)
    return S.CertificateModel(
        kind=cert.kind,
        epsilon=cert.epsilon,
        delta=cert.delta,
        distance=cert.distance,
        weights=cert.witness.tolist(),
        verdict=cert.verdict,
        generators=cert.generators.generators.tolist(),
        provenance=list(cert.generators.provenance),
        text=certificate_to_text(cert),
    )


@app.post("/subdiff/sampled-distance", response_model=S.SampledDistanceResponse)
def sampled_distance(req: S.SampledDistanceRequest):
    try:
        fn = req.function.to_function()
        d = sampled_goldstein_distance(
            fn, np.array(req.point, dtype=float), req.delta, req.n, req.seed
        )
    except (ValueError, RuntimeError) as exc:
        raise _fail(exc)
    return S.SampledDistanceResponse(distance=d)


@app.post("/subdiff/segment-gap", response_model=S.SegmentGapResponse)
def segment_gap(req: S.SegmentGapRequest):
    try:
        fn = req.function.to_function()
        x = np.array(req.x, dtype=float)
        y = np.array(req.y, dtype=float)
        est = segment_gap_estimate(fn, x, y, req.n, req.seed)
        exact = fn.value(x) - fn.value(y)
    except (ValueError, RuntimeError) as exc:
        raise _fail(exc)
    return S.SegmentGapResponse(estimate=est, exact_gap=exact)


@app.post("/lemmas/verify", response_model=S.LemmaResponse)
def lemmas(req: S.LemmaRequest):
    try:
        params = ResistingParams.from_queries(req.breakpoints, req.dimension, eta=req.eta)
        report = verify_lemmas(params, req.trials, req.seed, delta=req.delta)
    except (ValueError, RuntimeError) as exc:
        raise _fail(exc)
    return S.LemmaResponse(
        rows=[
            S.LemmaRowModel(
                lemma=r.lemma,
                trials=r.trials,
                status=r.status,
                counterexample=r.counterexample,
            )
            for r in report.results
        ],
        all_passed=report.all_passed,
        text=report.to_text(),
    )


@app.post("/experiments/run", response_model=S.ExperimentResponse)
def run(req: S.ExperimentRequest):
    try:
        config = harness.ExperimentConfig(
            mode=req.mode,
            algorithm=req.algorithm,
            T=req.T,
            d=req.d,
            epsilon=req.epsilon,
            delta=req.delta,
            seed=req.seed,
            algorithm_params=dict(req.algorithm_params),
            breakpoints=tuple(req.breakpoints) if req.breakpoints else None,
            function_text=req.function_text,
            expect=req.expect,
        )
        report = harness.run_experiment(config)
    except (ValueError, RuntimeError, AssertionError) as exc:
        raise _fail(exc)
    return S.ExperimentResponse(
        verdict=report.verdict,
        best_distance=report.best_distance,
        replay_verified=report.replay_verified,
        gzr_compliant=report.gzr_compliant,
        distances=report.distances,
        certified=report.certified,
        trajectory=[x.tolist() for x in report.trajectory],
        digest=report.digest,
        csv_text=report.csv_text(),
        report_text=report.to_text(),
        function_text=report.function_text,
        transcript_text=report.transcript_text,
    )


@app.post("/experiments/replay", response_model=S.ReplayResponse)
def replay(req: S.ReplayRequest):
    try:
        fn = function_from_text(req.function_text)
        transcript = transcript_from_text(req.transcript_text)
        algorithm = make_algorithm(req.algorithm, fn.dimension, **req.algorithm_params)
        ok = harness.replay_verify(transcript, fn, algorithm)
    except (ValueError, RuntimeError) as exc:
        raise _fail(exc)
    return S.ReplayResponse(replay_verified=ok)


@app.post("/adversary/sessions", response_model=S.SessionResponse)
def create_session(req: S.SessionRequest):
    try:
        cfg = AdversaryConfig(T=req.T, d=req.d, mode=req.mode)
    except ValueError as exc:
        raise _fail(exc)
    sid = uuid.uuid4().hex
    with _sessions_lock:
        _sessions[sid] = (cfg, Transcript(dimension=req.d), threading.Lock())
    return S.SessionResponse(session_id=sid)


def _get_session(sid: str):
    with _sessions_lock:
        if sid not in _sessions:
            raise HTTPException(status_code=404, detail=f"no session {sid}")
        return _sessions[sid]


@app.post("/adversary/sessions/{sid}/query", response_model=S.SessionQueryResponse)
def session_query(sid: str, req: S.SessionQueryRequest):
    cfg, transcript, lock = _get_session(sid)
    with lock:
        try:
            germ = adversary_answer(transcript, cfg, np.array(req.point, dtype=float))
        except (ValueError, RuntimeError) as exc:
            raise _fail(exc)
        return S.SessionQueryResponse(
            step=len(transcript),
            germ=S.GermModel(
                function=S.FunctionModel.from_function(germ.local_function),
                value=germ.value_at_query,
            ),
        )


@app.post("/adversary/sessions/{sid}/materialize", response_model=S.MaterializeResponse)
def session_materialize(sid: str):
    cfg, transcript, lock = _get_session(sid)
    with lock:
        try:
            fn, plan = materialize(transcript, cfg)
            params = ResistingParams.from_queries(
                [float(q[0]) for q in transcript.queries], cfg.d
            )
        except (ValueError, RuntimeError, AssertionError) as exc:
            raise _fail(exc)
        return S.MaterializeResponse(
            function=S.FunctionModel.from_function(fn),
            function_text=function_to_text(fn),
            rotation=plan.U.tolist() if plan is not None else None,
            sigma=params.sigma,
            eta=params.eta,
            breakpoints=list(params.breakpoints),
            transcript_text=transcript_to_text(transcript),
        )
