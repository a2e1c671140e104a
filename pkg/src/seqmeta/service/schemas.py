"""Pydantic request/response models of the HTTP service."""

from __future__ import annotations

from typing import Any, Optional

from pydantic import BaseModel, Field, model_validator


class EvaluationPromptModel(BaseModel):
    id: str = Field(min_length=1)
    prompt: str = Field(min_length=1)


class SessionCreateRequest(BaseModel):
    session_id: Optional[str] = None
    evaluations: Optional[list[EvaluationPromptModel]] = None
    seed: int = 0


class SessionResponse(BaseModel):
    session_id: str
    created_at: str
    seed: int
    schema_version: int
    evaluations: list[EvaluationPromptModel]
    assigned_counts: dict[str, int]
    submitted_counts: dict[str, int]


class ConditionResponse(BaseModel):
    session_id: str
    first_eval: str
    second_eval: str


class TrialSubmission(BaseModel):
    trial_index: int = Field(ge=0)
    first_eval: str = Field(min_length=1)
    second_eval: str = Field(min_length=1)
    r1: float = Field(ge=0.0, le=1.0)
    r2: float = Field(ge=0.0, le=1.0)
    covariates: Optional[dict[str, float]] = None

    @model_validator(mode="after")
    def _distinct_evaluations(self) -> "TrialSubmission":
        if self.first_eval == self.second_eval:
            raise ValueError("first_eval and second_eval must differ")
        return self


class TrialAck(BaseModel):
    status: str
    session_id: str
    trial_index: int
    submitted_total: int


class EqualityTestModel(BaseModel):
    second: str
    first_a: str
    first_b: str
    diff: float
    p_value: float
    p_holm: Optional[float]
    n_a: int
    n_b: int
    eligible: bool


class TriangleTestModel(BaseModel):
    label: str
    slack: float
    bootstrap_violation_fraction: float
    d_estimates: dict[str, float]
    min_condition_count: int
    eligible: bool


class NicReportModel(BaseModel):
    session_id: Optional[str]
    verdict: str
    alpha: float
    min_n: int
    equality_tests: list[EqualityTestModel]
    triangle_tests: list[TriangleTestModel]
    notes: list[str]
    interpretation: Optional[str]


class AnalyzeRequest(BaseModel):
    session_id: Optional[str] = None
    trials: Optional[list[dict[str, Any]]] = None
    threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    alpha: float = Field(default=0.01, gt=0.0, lt=1.0)
    permutations: int = Field(default=10000, ge=1000)
    bootstrap: int = Field(default=1000, ge=1000)
    min_n: int = Field(default=50, ge=1)
    strata: Optional[list[str]] = None
    seed: int = 0

    @model_validator(mode="after")
    def _one_source(self) -> "AnalyzeRequest":
        if (self.session_id is None) == (self.trials is None):
            raise ValueError("provide exactly one of session_id or trials")
        return self


class RotationTableRow(BaseModel):
    first: str
    second: str
    sequence: str
    exact: Optional[str]
    value: float


class RotationTableResponse(BaseModel):
    alpha: float
    beta: float
    gamma: float
    v0: list[float]
    rows: list[RotationTableRow]
    equality_gaps: dict[str, float]
    binary_disagreements: dict[str, float]


class PairTableModel(BaseModel):
    """One pairwise cell specification: P(A_i = 1, A_j = 1) for a named pair."""

    a: str
    b: str
    p11: float | str


class FeasibilityRequest(BaseModel):
    variables: list[str] = Field(min_length=2, max_length=3)
    singles: dict[str, float | str]
    p11: list[PairTableModel]
    max_denominator: int = Field(default=10**6, ge=1)


class CertificateModel(BaseModel):
    constant: str
    single_coefficients: dict[str, str]
    pair_coefficients: dict[str, str]
    inequality: str


class FeasibilityResponse(BaseModel):
    feasible: bool
    method: str
    witness: Optional[dict[str, str]] = None
    certificate: Optional[CertificateModel] = None


class SimulateRequest(BaseModel):
    agent: dict[str, Any]
    n_trials_per_condition: int = Field(ge=1, le=100000)
    seed: int = 0
    session_id: Optional[str] = None
    counterbalancing: str = "randomized"


class TrialModel(BaseModel):
    session_id: str
    trial_index: int
    first_eval: str
    second_eval: str
    r1: float
    r2: float
    covariates: Optional[dict[str, float]] = None


class SimulateResponse(BaseModel):
    session_id: str
    trials: list[TrialModel]
