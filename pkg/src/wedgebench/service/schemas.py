"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field

import numpy as np

from ..pa_core import AffineAtom, MaxMinFunction


class AtomModel(BaseModel):
    gradient: list[float]
    offset: float


class FunctionModel(BaseModel):
    dimension: int
    terms: list[list[AtomModel]]

    @classmethod
    def from_function(cls, f: MaxMinFunction) -> "FunctionModel":
        return cls(
            dimension=f.dimension,
            terms=[
                [AtomModel(gradient=a.gradient.tolist(), offset=a.offset) for a in term]
                for term in f.terms
            ],
        )

    def to_function(self) -> MaxMinFunction:
        terms = tuple(
            tuple(AffineAtom(np.array(a.gradient), a.offset) for a in term)
            for term in self.terms
        )
        return MaxMinFunction(self.dimension, terms)


class BuildRequest(BaseModel):
    kind: str  # resisting | wedge | hard | tester
    breakpoints: list[float] | None = None
    eta: float | None = None
    dimension: int = 2
    a: float | None = None
    b: float | None = None


class BuildResponse(BaseModel):
    function: FunctionModel
    text: str
    sigma: float | None = None
    eta: float | None = None
    lipschitz_bound: float


class EvaluateRequest(BaseModel):
    function: FunctionModel
    points: list[list[float]]


class EvaluateResponse(BaseModel):
    values: list[float]


class PiecesRequest(BaseModel):
    function: FunctionModel


class PieceModel(BaseModel):
    term_index: int
    atom_index: int
    gradient: list[float]
    offset: float
    n_cells: int
    full_dimensional: bool


class PiecesResponse(BaseModel):
    pieces: list[PieceModel]


class GeneratorsRequest(BaseModel):
    function: FunctionModel
    point: list[float]
    delta: float = 0.0


class GeneratorsResponse(BaseModel):
    generators: list[list[float]]
    provenance: list[str]


class MinNormRequest(BaseModel):
    generators: list[list[float]]


class MinNormResponse(BaseModel):
    distance: float
    weights: list[float]


class CertifyRequest(BaseModel):
    function: FunctionModel
    point: list[float]
    epsilon: float
    delta: float
    kind: str = "gas"  # gas | nas


class CertificateModel(BaseModel):
    kind: str
    epsilon: float
    delta: float
    distance: float
    weights: list[float]
    verdict: str
    generators: list[list[float]]
    provenance: list[str]
    text: str


class SampledDistanceRequest(BaseModel):
    function: FunctionModel
    point: list[float]
    delta: float
    n: int
    seed: int = 0


class SampledDistanceResponse(BaseModel):
    distance: float


class SegmentGapRequest(BaseModel):
    function: FunctionModel
    x: list[float]
    y: list[float]
    n: int
    seed: int = 0


class SegmentGapResponse(BaseModel):
    estimate: float
    exact_gap: float


class LemmaRequest(BaseModel):
    breakpoints: list[float] = Field(default_factory=lambda: [0.0])
    eta: float | None = None
    dimension: int = 2
    trials: int = 1000
    seed: int = 0
    delta: float = 0.2


class LemmaRowModel(BaseModel):
    lemma: str
    trials: int
    status: str
    counterexample: str | None = None


class LemmaResponse(BaseModel):
    rows: list[LemmaRowModel]
    all_passed: bool
    text: str


class ExperimentRequest(BaseModel):
    mode: str
    algorithm: str
    T: int
    d: int
    epsilon: float
    delta: float
    seed: int = 0
    algorithm_params: dict = Field(default_factory=dict)
    breakpoints: list[float] | None = None
    function_text: str | None = None
    expect: str | None = None


class ExperimentResponse(BaseModel):
    verdict: str
    best_distance: float
    replay_verified: bool | None
    gzr_compliant: bool | None
    distances: list[float]
    certified: list[bool]
    trajectory: list[list[float]]
    digest: dict
    csv_text: str
    report_text: str
    function_text: str
    transcript_text: str | None


class ReplayRequest(BaseModel):
    function_text: str
    transcript_text: str
    algorithm: str
    algorithm_params: dict = Field(default_factory=dict)


class ReplayResponse(BaseModel):
    replay_verified: bool


class SessionRequest(BaseModel):
    mode: str
    T: int
    d: int


class SessionResponse(BaseModel):
    session_id: str


class SessionQueryRequest(BaseModel):
    point: list[float]


class GermModel(BaseModel):
    function: FunctionModel
    value: float


class SessionQueryResponse(BaseModel):
    step: int
    germ: GermModel


class MaterializeResponse(BaseModel):
    function: FunctionModel
    function_text: str
    rotation: list[list[float]] | None
    sigma: float
    eta: float
    breakpoints: list[float]
    transcript_text: str
