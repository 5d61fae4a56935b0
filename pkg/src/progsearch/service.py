"""HTTP service running progressive queries and streaming guarantee events.

Wire format: one JSON object per event, framed as ``data: {...}\\n\\n`` lines
over a long-lived response, so both ``curl`` and browser ``EventSource``
clients can consume it.  Events replay idempotently from the per-session log
on reconnect.
"""

from __future__ import annotations

import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import StreamingResponse
from pydantic import BaseModel, model_validator

from .dataset import Dataset
from .index import Distance, IndexTree
from .models import GuaranteeBundle, agreement, majority_label
from .search import SearchConfig, progressive_knn
from .stopping import StoppingPolicy, decide

EVENT_ESTIMATOR = "kde2"


class QueryPayload(BaseModel):
    series: list[float] | None = None
    series_index: int | None = None
    k: int | None = None
    distance: str | None = None
    policy: str = "none"
    theta: float = 0.05

    @model_validator(mode="after")
    def _one_source(self):
        if (self.series is None) == (self.series_index is None):
            raise ValueError("provide exactly one of series or series_index")
        return self


@dataclass
class Session:
    session_id: str
    policy: StoppingPolicy
    theta: float
    state: str = "running"
    log: list[dict] = field(default_factory=list)
    stop_requested: bool = False
    stop_event: threading.Event = field(default_factory=threading.Event)
    cond: threading.Condition = field(default_factory=threading.Condition)

    def append(self, event: dict) -> None:
        with self.cond:
            self.log.append(event)
            self.cond.notify_all()

    def finish(self, state: str) -> None:
        with self.cond:
            self.state = state
            self.cond.notify_all()


class QueryService:
    def __init__(self, tree: IndexTree, bundle: GuaranteeBundle,
                 dataset: Dataset | None = None, labels: np.ndarray | None = None,
                 parallelism: int = 4):
        self.tree = tree
        self.bundle = bundle
        self.dataset = dataset
        self.labels = labels
        self.pool = ThreadPoolExecutor(max_workers=parallelism)
        self.sessions: dict[str, Session] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def submit(self, payload: QueryPayload) -> Session:
        if payload.k is not None and payload.k != self.bundle.k:
            raise HTTPException(400, detail=f"bundle was trained for k={self.bundle.k}, "
                                            f"not k={payload.k}")
        if payload.distance is not None:
            if Distance.parse(payload.distance) != self.bundle.distance:
                raise HTTPException(400, detail="bundle was trained for distance "
                                                f"{self.bundle.distance}")
        try:
            policy = StoppingPolicy.parse(payload.policy)
        except ValueError as exc:
            raise HTTPException(400, detail=str(exc))
        if policy.kind == "class_probability" and self.labels is None:
            raise HTTPException(400, detail="service has no labels for class policies")
        if payload.series is not None:
            query = np.asarray(payload.series, dtype=np.float64)
        else:
            if self.dataset is None:
                raise HTTPException(400, detail="service has no dataset for references")
            if not 0 <= payload.series_index < self.dataset.n:
                raise HTTPException(400, detail="series_index out of range")
            query = self.dataset.values[payload.series_index]
        if query.shape != (self.tree.dataset.length,):
            raise HTTPException(400, detail=f"query length {query.size} != "
                                            f"{self.tree.dataset.length}")
        with self._lock:
            self._counter += 1
            session = Session(session_id=f"q{self._counter}", policy=policy,
                              theta=payload.theta)
            self.sessions[session.session_id] = session
        self.pool.submit(self._run, session, query)
        return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise HTTPException(404, detail=f"unknown session {session_id}")
        return session

    def _event_payload(self, session: Session, event, first_approx, tau) -> dict:
        bundle = self.bundle
        bsf_k = float(event.bsf_distances[-1])
        doc = {
            "session": session.session_id,
            "leaves_visited": int(event.leaves_visited),
            "bsf_ids": [int(i) for i in event.bsf_ids],
            "bsf_distances": [None if not np.isfinite(d) else float(d)
                              for d in event.bsf_distances],
            "state": "running",
        }
        if np.isfinite(bsf_k):
            try:
                est = bundle.estimate_distance(bsf_k, event.leaves_visited,
                                               session.theta, EVENT_ESTIMATOR)
                doc["point_estimate"] = est.point
                doc["lower_bound"] = est.lower
                doc["upper_bound"] = est.upper
                doc["error_upper_bound"] = bsf_k / est.lower - 1.0
            except LookupError:
                pass
            p = bundle.exact_probability(bsf_k, event.leaves_visited)
            if p is not None:
                doc["p_exact"] = p
            if tau is not None:
                doc["tau_leaves"] = int(tau)
            if self.labels is not None and np.all(event.bsf_ids >= 0):
                current = self.labels[event.bsf_ids]
                if bundle.k >= 2:
                    agree, cls = agreement(current)
                else:
                    agree, cls = None, int(current[0])
                doc["class"] = int(cls)
                p_cls = bundle.class_probability(bsf_k, event.leaves_visited, agree, cls)
                if p_cls is not None:
                    doc["p_class"] = p_cls
        return doc

    def _run(self, session: Session, query: np.ndarray) -> None:
        bundle = self.bundle
        checkpoints = tuple(sorted({1, *bundle.moments}))
        state = {"first_approx": None, "tau": None, "policy_stop": False}

        def on_event(event):
            bsf_k = float(event.bsf_distances[-1])
            if state["first_approx"] is None and np.isfinite(bsf_k):
                state["first_approx"] = bsf_k
                phi = session.policy.phi if session.policy.kind == "time_bound" else 0.05
                try:
                    state["tau"] = bundle.time_bound(bsf_k, phi)
                except LookupError:
                    state["tau"] = None
            session.append(self._event_payload(session, event,
                                               state["first_approx"], state["tau"]))
            if session.policy.kind != "none" and event.leaves_visited in bundle.moments:
                labels_at = None
                if self.labels is not None and np.all(event.bsf_ids >= 0):
                    labels_at = self.labels[event.bsf_ids]
                decision = decide(session.policy, bundle, event.leaves_visited, bsf_k,
                                  state["first_approx"], labels_at)
                if decision.stop:
                    state["policy_stop"] = True
                    session.stop_event.set()

        config = SearchConfig(k=bundle.k, distance=bundle.distance,
                              checkpoints=checkpoints, stop=session.stop_event)
        try:
            trace = progressive_knn(self.tree, query, config, on_event=on_event)
        except Exception as exc:  # surface the failure instead of hanging readers
            session.append({"session": session.session_id, "state": "failed",
                            "error": str(exc)})
            session.finish("failed")
            return
        if trace.stopped_early_at is None:
            final_state = "finished"
        elif session.stop_requested:
            final_state = "stopped_by_user"
        else:
            final_state = "stopped_by_policy"
        dists, ids = trace.bsf_at(trace.total_leaves)
        terminal = {
            "session": session.session_id,
            "leaves_visited": int(trace.total_leaves),
            "bsf_ids": [int(i) for i in ids],
            "bsf_distances": [None if not np.isfinite(d) else float(d) for d in dists],
            "state": final_state,
        }
        if self.labels is not None and np.all(ids >= 0):
            terminal["class"] = int(majority_label(self.labels[ids]))
        session.append(terminal)
        session.finish(final_state)

    def stream(self, session: Session):
        i = 0
        while True:
            with session.cond:
                while i >= len(session.log) and session.state == "running":
                    session.cond.wait(timeout=0.5)
                if i < len(session.log):
                    event = session.log[i]
                    i += 1
                else:
                    return
            yield f"data: {json.dumps(event, sort_keys=True)}\n\n"
            if event.get("state", "running") != "running":
                return


def create_app(tree: IndexTree, bundle: GuaranteeBundle,
               dataset: Dataset | None = None, labels: np.ndarray | None = None,
               parallelism: int = 4, console_dir=None) -> FastAPI:
    app = FastAPI(title="progsearch")
    service = QueryService(tree, bundle, dataset=dataset, labels=labels,
                           parallelism=parallelism)
    app.state.service = service

    @app.get("/v1/health")
    def health():
        return {"status": "ok"}

    @app.post("/v1/queries")
    def submit(payload: QueryPayload):
        session = service.submit(payload)
        return {"session": session.session_id}

    @app.get("/v1/queries/{session_id}/events")
    def events(session_id: str):
        session = service.get(session_id)
        return StreamingResponse(service.stream(session),
                                 media_type="text/event-stream")

    @app.post("/v1/queries/{session_id}/stop")
    def stop(session_id: str):
        session = service.get(session_id)
        session.stop_requested = True
        session.stop_event.set()
        return {"state": session.state, "stop_requested": True}

    if console_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=str(console_dir), html=True),
                  name="console")
    return app
