"""HTTP service: trial collection for browser clients plus analysis endpoints.

The collection surface (create session, next condition, submit trial, export)
is what the experiment runner consumes; the compute endpoints expose the same
operations the CLI runs locally. Everything wraps the core package, which
stays framework-free.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse

from .. import agents, feasibility, nic, rotation
from ..core import StateVector
from ..store import SessionStore, TrialConflictError, UnknownSessionError
from ..trials import TrialRecord
from . import schemas


def _manifest_response(manifest) -> schemas.SessionResponse:
    return schemas.SessionResponse(
        session_id=manifest.session_id,
        created_at=manifest.created_at,
        seed=manifest.seed,
        schema_version=manifest.schema_version,
        evaluations=[
            schemas.EvaluationPromptModel(id=e.id, prompt=e.prompt)
            for e in manifest.evaluations
        ],
        assigned_counts=dict(manifest.assigned_counts),
        submitted_counts=dict(manifest.submitted_counts),
    )


def _report_response(report: nic.NicTestReport) -> schemas.NicReportModel:
    return schemas.NicReportModel(**report.to_dict())


def create_app(data_dir: Union[str, Path]) -> FastAPI:
    """Build the service around a session store rooted at ``data_dir``."""
    store = SessionStore(data_dir)
    app = FastAPI(title="seqmeta service", version="0.1.0")
    app.state.store = store
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(UnknownSessionError)
    async def _unknown_session(request, exc):  # noqa: ANN001
        return JSONResponse(
            status_code=404, content={"detail": f"unknown session {exc.args[0]!r}"}
        )

    # -- collection surface -------------------------------------------------

    @app.post("/sessions", response_model=schemas.SessionResponse, status_code=201)
    def create_session(request: schemas.SessionCreateRequest) -> schemas.SessionResponse:
        evaluations = None
        if request.evaluations is not None:
            evaluations = [(e.id, e.prompt) for e in request.evaluations]
        try:
            manifest = store.create_session(
                session_id=request.session_id,
                evaluations=evaluations,
                seed=request.seed,
            )
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        return _manifest_response(manifest)

    @app.get("/sessions/{session_id}", response_model=schemas.SessionResponse)
    def get_session(session_id: str) -> schemas.SessionResponse:
        return _manifest_response(store.get_manifest(session_id))

    @app.get(
        "/sessions/{session_id}/next-condition",
        response_model=schemas.ConditionResponse,
    )
    def next_condition(session_id: str) -> schemas.ConditionResponse:
        first, second = store.next_condition(session_id)
        return schemas.ConditionResponse(
            session_id=session_id, first_eval=first, second_eval=second
        )

    @app.post(
        "/sessions/{session_id}/trials",
        response_model=schemas.TrialAck,
        status_code=201,
    )
    def submit_trial(session_id: str, submission: schemas.TrialSubmission) -> schemas.TrialAck:
        try:
            record = TrialRecord(
                session_id=session_id,
                trial_index=submission.trial_index,
                first_eval=submission.first_eval,
                second_eval=submission.second_eval,
                r1=submission.r1,
                r2=submission.r2,
                covariates=submission.covariates,
            )
            ack = store.append_trial(record)
        except TrialConflictError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return schemas.TrialAck(
            status=ack.status,
            session_id=ack.session_id,
            trial_index=ack.trial_index,
            submitted_total=ack.submitted_total,
        )

    @app.get("/sessions/{session_id}/export", response_class=PlainTextResponse)
    def export_session(session_id: str) -> str:
        return store.export_text(session_id)

    # -- compute surface ------------------------------------------------------

    @app.get("/rotation-table", response_model=schemas.RotationTableResponse)
    def rotation_table(
        alpha: float = rotation.DEFAULT_ANGLE,
        beta: float = rotation.DEFAULT_ANGLE,
        gamma: float = rotation.DEFAULT_ANGLE,
        v0: str = "",
    ) -> schemas.RotationTableResponse:
        try:
            kwargs = {"alpha": alpha, "beta": beta, "gamma": gamma}
            if v0:
                kwargs["v0"] = StateVector.from_array(
                    [float(part) for part in v0.split(",")]
                )
            cfg = rotation.RotationModelConfig(**kwargs)
            rows = rotation.table_rows(cfg)
            gaps = rotation.equality_gaps(rotation.exact_c_matrix(cfg))
            binary = rotation.binary_check(cfg)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return schemas.RotationTableResponse(
            alpha=cfg.alpha,
            beta=cfg.beta,
            gamma=cfg.gamma,
            v0=[cfg.v0.x, cfg.v0.y, cfg.v0.z],
            rows=[schemas.RotationTableRow(**row) for row in rows],
            equality_gaps=gaps,
            binary_disagreements={"d12": binary.d12, "d13": binary.d13, "d23": binary.d23},
        )

    @app.post("/analyze", response_model=schemas.NicReportModel)
    def analyze(request: schemas.AnalyzeRequest) -> schemas.NicReportModel:
        if request.session_id is not None:
            records = store.read_trials(request.session_id)
            session_id = request.session_id
        else:
            try:
                records = [TrialRecord(**payload) for payload in request.trials or []]
            except (TypeError, ValueError) as exc:
                raise HTTPException(status_code=400, detail=str(exc)) from exc
            session_id = None
        if not records:
            raise HTTPException(status_code=400, detail="no trials to analyze")
        try:
            report = nic.analyze_trials(
                records,
                threshold=request.threshold,
                alpha=request.alpha,
                n_permutations=request.permutations,
                n_bootstrap=request.bootstrap,
                min_n=request.min_n,
                strata=request.strata,
                seed=request.seed,
                session_id=session_id,
            )
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return _report_response(report)

    @app.post("/feasibility", response_model=schemas.FeasibilityResponse)
    def feasibility_check(request: schemas.FeasibilityRequest) -> schemas.FeasibilityResponse:
        try:
            system = _system_from_request(request)
            result = feasibility.check_feasibility(system)
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return _feasibility_response(result, system)

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate_trials(request: schemas.SimulateRequest) -> schemas.SimulateResponse:
        try:
            agent = agents.agent_from_dict(request.agent)
            plan = agents.SimulationPlan(
                n_trials_per_condition=request.n_trials_per_condition,
                seed=request.seed,
                counterbalancing=request.counterbalancing,
            )
            records = agents.simulate(agent, plan, session_id=request.session_id)
        except (KeyError, TypeError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return schemas.SimulateResponse(
            session_id=records[0].session_id,
            trials=[
                schemas.TrialModel(
                    session_id=t.session_id,
                    trial_index=t.trial_index,
                    first_eval=t.first_eval,
                    second_eval=t.second_eval,
                    r1=t.r1,
                    r2=t.r2,
                    covariates=t.covariates,
                )
                for t in records
            ],
        )

    return app


def _system_from_request(request: schemas.FeasibilityRequest) -> feasibility.MarginalSystem:
    variables = list(request.variables)
    index = {name: k for k, name in enumerate(variables)}
    singles = []
    for name in variables:
        if name not in request.singles:
            raise ValueError(f"missing singleton probability for variable {name!r}")
        singles.append(request.singles[name])
    p11 = {}
    for entry in request.p11:
        if entry.a not in index or entry.b not in index:
            raise ValueError(f"pair ({entry.a},{entry.b}) names unknown variables")
        p11[(index[entry.a], index[entry.b])] = entry.p11
    return feasibility.MarginalSystem.from_singles_and_p11(
        variables, singles, p11, max_denominator=request.max_denominator
    )


def _feasibility_response(
    result: feasibility.FeasibilityResult, system: feasibility.MarginalSystem
) -> schemas.FeasibilityResponse:
    witness = None
    certificate = None
    if result.witness is not None:
        witness = {
            "".join(map(str, atom)): str(prob) for atom, prob in sorted(result.witness.items())
        }
    if result.certificate is not None:
        cert = result.certificate
        certificate = schemas.CertificateModel(
            constant=str(cert.constant),
            single_coefficients={
                name: str(coef)
                for name, coef in zip(cert.variables, cert.single_coefficients)
            },
            pair_coefficients={
                f"{cert.variables[i]}&{cert.variables[j]}": str(coef)
                for (i, j), coef in cert.pair_coefficients.items()
            },
            inequality=str(cert),
        )
    return schemas.FeasibilityResponse(
        feasible=result.feasible,
        method=result.method,
        witness=witness,
        certificate=certificate,
    )
