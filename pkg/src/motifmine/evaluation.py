"""Imposter-detection evaluation: 4 host images vs 1 imposter per question.

A session bundles 25 questions, 5 of them controls built from planted
exact-duplicate image groups. Sessions failing controls (< 4/5 correct)
are discarded; accuracy is counted over the remaining non-control
questions. Answers persist as an append-only JSON-lines log.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .clustering import Clustering
from .simgraph import SimilarityGraph

ANNOTATOR_RANDOM = "random"
ANNOTATOR_ORACLE = "similarity_oracle"

N_QUESTIONS = 25
N_CONTROLS = 5
K_HOST = 4
CONTROL_PASS_MIN = 4


@dataclass
class ImposterQuestion:
    question_id: str
    host_cluster: int
    host_images: list[int]  # K_HOST distinct ids
    imposter_image: int
    display_order: list[int]  # permutation of host_images + [imposter_image]
    is_control: bool

    def __post_init__(self):
        imgs = set(self.host_images) | {self.imposter_image}
        if len(self.host_images) != len(set(self.host_images)):
            raise ValueError("host images must be distinct")
        if self.imposter_image in self.host_images:
            raise ValueError("imposter cannot be a host image")
        if sorted(self.display_order) != sorted(imgs):
            raise ValueError("display_order must permute the 5 images")

    @property
    def correct_position(self) -> int:
        return self.display_order.index(self.imposter_image)


@dataclass
class EvalSession:
    session_id: str
    config_label: str
    seed: int
    questions: list[ImposterQuestion]

    def __post_init__(self):
        n_ctrl = sum(q.is_control for q in self.questions)
        if self.questions and n_ctrl != N_CONTROLS:
            raise ValueError(f"expected {N_CONTROLS} control questions, got {n_ctrl}")


@dataclass
class AnswerRecord:
    session_id: str
    question_id: str
    chosen_position: int
    annotator_id: str
    timestamp: float = field(default_factory=time.time)

    def __post_init__(self):
        if not 0 <= self.chosen_position < K_HOST + 1:
            raise ValueError("chosen_position out of range")


@dataclass
class AccuracyReport:
    config_label: str
    n_scored: int
    accuracy: float
    sessions_discarded: int
    control_pass: dict[str, bool] = field(default_factory=dict)
    n_sessions: int = 0


def sample_question(
    clustering: Clustering,
    seed: int,
    control: bool = False,
    control_groups: list[list[int]] | None = None,
    question_id: str = "q",
) -> ImposterQuestion:
    """Draw one question: 4 same-cluster hosts plus a foreign imposter.

    Controls use a planted exact-duplicate group as the hosts, so the odd
    image out is unambiguous regardless of clustering quality.
    """
    rng = np.random.default_rng(seed)
    assign = clustering.assignment
    sizes = np.bincount(assign, minlength=clustering.n_clusters)
    if clustering.n_clusters < 2:
        raise ValueError("need at least 2 clusters to pick an imposter")

    if control:
        groups = [g for g in (control_groups or []) if len(g) >= K_HOST]
        if not groups:
            raise ValueError("no planted duplicate group of size >= 4 available")
        group = groups[int(rng.integers(len(groups)))]
        host_images = [int(v) for v in rng.choice(group, size=K_HOST, replace=False)]
        host_cluster = int(assign[host_images[0]])
        foreign = np.flatnonzero(assign != host_cluster)
        foreign = foreign[~np.isin(foreign, group)]
        if foreign.size == 0:
            raise ValueError("no image outside the control group's cluster")
        imposter = int(rng.choice(foreign))
    else:
        eligible = np.flatnonzero(sizes >= K_HOST)
        if eligible.size == 0:
            raise ValueError("no cluster with >= 4 members to host a question")
        host_cluster = int(rng.choice(eligible))
        members = clustering.members(host_cluster)
        host_images = [int(v) for v in rng.choice(members, size=K_HOST, replace=False)]
        other = np.flatnonzero((sizes > 0) & (np.arange(sizes.size) != host_cluster))
        if other.size == 0:
            raise ValueError("no non-host cluster to draw an imposter from")
        imp_cluster = int(rng.choice(other))
        imposter = int(rng.choice(clustering.members(imp_cluster)))

    order = host_images + [imposter]
    order = [order[int(t)] for t in rng.permutation(K_HOST + 1)]
    return ImposterQuestion(
        question_id=question_id,
        host_cluster=host_cluster,
        host_images=host_images,
        imposter_image=imposter,
        display_order=order,
        is_control=control,
    )


def sample_session(
    clustering: Clustering,
    config_label: str,
    seed: int,
    control_groups: list[list[int]],
    session_id: str | None = None,
) -> EvalSession:
    """25 questions with 5 controls at seeded random slots."""
    rng = np.random.default_rng(seed)
    sid = session_id or f"{config_label}-{seed:08x}"
    control_slots = set(rng.choice(N_QUESTIONS, size=N_CONTROLS, replace=False).tolist())
    questions = []
    for slot in range(N_QUESTIONS):
        questions.append(
            sample_question(
                clustering,
                seed=int(rng.integers(2**63)),
                control=slot in control_slots,
                control_groups=control_groups,
                question_id=f"{sid}.q{slot:02d}",
            )
        )
    return EvalSession(session_id=sid, config_label=config_label, seed=seed, questions=questions)


def score(sessions: list[EvalSession], answers: list[AnswerRecord]) -> AccuracyReport:
    """Accuracy over non-control questions of sessions passing controls.

    Every question of every given session must be answered exactly once.
    """
    by_key: dict[tuple[str, str], AnswerRecord] = {}
    for a in answers:
        key = (a.session_id, a.question_id)
        if key in by_key:
            raise ValueError(f"duplicate answer for {key}")
        by_key[key] = a
    labels = {s.config_label for s in sessions}
    label = labels.pop() if len(labels) == 1 else ("mixed" if labels else "")
    n_scored = n_correct = discarded = 0
    control_pass: dict[str, bool] = {}
    for s in sessions:
        records = []
        for q in s.questions:
            a = by_key.get((s.session_id, q.question_id))
            if a is None:
                raise ValueError(f"unanswered question {q.question_id} in {s.session_id}")
            records.append((q, a.chosen_position == q.correct_position))
        ctrl_ok = sum(ok for q, ok in records if q.is_control)
        passed = ctrl_ok >= CONTROL_PASS_MIN
        control_pass[s.session_id] = passed
        if not passed:
            discarded += 1
            continue
        for q, ok in records:
            if not q.is_control:
                n_scored += 1
                n_correct += int(ok)
    return AccuracyReport(
        config_label=label,
        n_scored=n_scored,
        accuracy=(n_correct / n_scored) if n_scored else 0.0,
        sessions_discarded=discarded,
        control_pass=control_pass,
        n_sessions=len(sessions),
    )


def score_log(sessions: list[EvalSession], answers: list[AnswerRecord]) -> AccuracyReport:
    """score() restricted to fully answered sessions (the service view)."""
    answered: dict[str, set[str]] = {}
    for a in answers:
        answered.setdefault(a.session_id, set()).add(a.question_id)
    complete = [
        s
        for s in sessions
        if {q.question_id for q in s.questions} <= answered.get(s.session_id, set())
    ]
    keep = {s.session_id for s in complete}
    kept_answers = [a for a in answers if a.session_id in keep]
    return score(complete, kept_answers)


def empirical_disagreement(reports: AccuracyReport | list[AccuracyReport]) -> float:
    """1 - pooled accuracy; the error mass the clustering leaves behind."""
    if isinstance(reports, AccuracyReport):
        reports = [reports]
    total = sum(r.n_scored for r in reports)
    if total == 0:
        raise ValueError("no scored questions")
    correct = sum(r.accuracy * r.n_scored for r in reports)
    return 1.0 - correct / total


def simulated_annotator(
    kind: str,
    question: ImposterQuestion,
    g: SimilarityGraph | None = None,
    seed: int = 0,
) -> int:
    """Answer a question: uniform random, or least-connected-image oracle."""
    if kind == ANNOTATOR_RANDOM:
        return int(np.random.default_rng(seed).integers(K_HOST + 1))
    if kind != ANNOTATOR_ORACLE:
        raise ValueError(f"unknown annotator kind {kind!r}")
    if g is None:
        raise ValueError("similarity_oracle needs the graph")
    lut = {
        (int(i), int(j)): float(w)
        for i, j, w in zip(g.edge_i, g.edge_j, g.weights)
    }

    def w_of(a: int, b: int) -> float:
        return lut.get((min(a, b), max(a, b)), 0.0)

    shown = question.display_order
    totals = [
        sum(w_of(v, u) for u in shown if u != v)
        for v in shown
    ]
    return int(np.argmin(totals))  # ties: lowest position


def run_simulated_sessions(
    clustering: Clustering,
    g: SimilarityGraph,
    config_label: str,
    control_groups: list[list[int]],
    kind: str = ANNOTATOR_ORACLE,
    n_sessions: int = 2,
    seed: int = 0,
) -> tuple[list[EvalSession], list[AnswerRecord]]:
    rng = np.random.default_rng(seed)
    sessions, answers = [], []
    for t in range(n_sessions):
        s = sample_session(
            clustering,
            config_label,
            seed=int(rng.integers(2**63)),
            control_groups=control_groups,
            session_id=f"{config_label}-sim{t:03d}",
        )
        sessions.append(s)
        for q in s.questions:
            answers.append(
                AnswerRecord(
                    session_id=s.session_id,
                    question_id=q.question_id,
                    chosen_position=simulated_annotator(
                        kind, q, g, seed=int(rng.integers(2**63))
                    ),
                    annotator_id=f"sim-{kind}",
                    timestamp=0.0,
                )
            )
    return sessions, answers


# -- persistence --------------------------------------------------------------


def question_to_json(q: ImposterQuestion) -> dict:
    return asdict(q)


def question_from_json(blob: dict) -> ImposterQuestion:
    return ImposterQuestion(
        question_id=blob["question_id"],
        host_cluster=int(blob["host_cluster"]),
        host_images=[int(v) for v in blob["host_images"]],
        imposter_image=int(blob["imposter_image"]),
        display_order=[int(v) for v in blob["display_order"]],
        is_control=bool(blob["is_control"]),
    )


def save_sessions(sessions: list[EvalSession], path) -> None:
    blob = {
        s.session_id: {
            "session_id": s.session_id,
            "config_label": s.config_label,
            "seed": s.seed,
            "questions": [question_to_json(q) for q in s.questions],
        }
        for s in sessions
    }
    with open(path, "w", encoding="ascii") as fh:
        json.dump(blob, fh, sort_keys=True)
        fh.write("\n")


def load_sessions(path) -> list[EvalSession]:
    with open(path, encoding="ascii") as fh:
        blob = json.load(fh)
    return [
        EvalSession(
            session_id=rec["session_id"],
            config_label=rec["config_label"],
            seed=int(rec["seed"]),
            questions=[question_from_json(q) for q in rec["questions"]],
        )
        for _, rec in sorted(blob.items())
    ]


def append_answers(answers: list[AnswerRecord], path) -> None:
    with open(path, "a", encoding="ascii") as fh:
        for a in answers:
            fh.write(json.dumps(asdict(a), sort_keys=True))
            fh.write("\n")
        fh.flush()


def load_answers(path) -> list[AnswerRecord]:
    out = []
    try:
        fh = open(path, encoding="ascii")
    except FileNotFoundError:
        return out
    with fh:
        for line in fh:
            if not line.strip():
                continue
            blob = json.loads(line)
            out.append(
                AnswerRecord(
                    session_id=blob["session_id"],
                    question_id=blob["question_id"],
                    chosen_position=int(blob["chosen_position"]),
                    annotator_id=blob["annotator_id"],
                    timestamp=float(blob["timestamp"]),
                )
            )
    return out
