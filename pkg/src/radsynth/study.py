"""Timed real-vs-fake observer study: decks, session lifecycle, scoring.

Items are shown one at a time under a per-image deadline stamped
server-side at first delivery. Responses use five certainty levels
(0 real ... 1 fake) and are scored fractionally: a response r on a fake
item contributes r to TP and 1-r to FN; on a real item r to FP and 1-r
to TN. Late responses are coerced to 0.5 and flagged. The HTTP layer
lives in the service module; everything here is clock-injectable and
framework-free.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal

import numpy as np

from .errors import ConflictError, DataError, SequencingError
from .metrics import ScoredLabel, roc_curve

ALLOWED_VALUES = (0.0, 0.25, 0.5, 0.75, 1.0)
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class DeckItem:
    image_id: str
    file_ref: str
    truth: Literal["real", "fake"]


@dataclass(frozen=True)
class StudyDeck:
    items: tuple[DeckItem, ...]
    seed: int

    def __post_init__(self):
        ids = [it.image_id for it in self.items]
        if len(set(ids)) != len(ids):
            raise DataError("deck image ids must be unique")

    @property
    def fake_count(self) -> int:
        return sum(1 for it in self.items if it.truth == "fake")

    @property
    def real_count(self) -> int:
        return len(self.items) - self.fake_count


def _item_id(seed: int, index: int, ref: str) -> str:
    return hashlib.sha256(f"{seed}:{index}:{ref}".encode()).hexdigest()[:12]


def build_deck(
    real_refs: list[str], fake_refs: list[str], n_each: int, seed: int
) -> StudyDeck:
    """n_each of each truth sampled without replacement, order shuffled."""
    if n_each < 1:
        raise DataError(f"n_each must be positive, got {n_each}")
    if len(real_refs) < n_each or len(fake_refs) < n_each:
        raise DataError(
            f"need {n_each} refs per class, have {len(real_refs)} real / {len(fake_refs)} fake"
        )
    rng = np.random.Generator(np.random.Philox(seed))
    chosen_real = [real_refs[i] for i in rng.choice(len(real_refs), n_each, replace=False)]
    chosen_fake = [fake_refs[i] for i in rng.choice(len(fake_refs), n_each, replace=False)]
    pool: list[tuple[str, str]] = [(r, "real") for r in chosen_real]
    pool += [(f, "fake") for f in chosen_fake]
    order = rng.permutation(len(pool))
    items = tuple(
        DeckItem(image_id=_item_id(seed, pos, pool[i][0]), file_ref=pool[i][0],
                 truth=pool[i][1])
        for pos, i in enumerate(order)
    )
    return StudyDeck(items=items, seed=seed)


@dataclass(frozen=True)
class Response:
    image_id: str
    value: float
    elapsed: float
    timed_out: bool

    def __post_init__(self):
        if self.value not in ALLOWED_VALUES:
            raise ValueError(f"value must be one of {ALLOWED_VALUES}, got {self.value}")
        if self.elapsed < 0:
            raise ValueError(f"elapsed must be nonnegative, got {self.elapsed}")


@dataclass(frozen=True)
class SessionReport:
    tp: float
    tn: float
    fp: float
    fn: float
    u: int
    precision: float
    recall: float
    accuracy: float


@dataclass(frozen=True)
class NextItem:
    image_id: str
    file_ref: str
    index: int
    total: int
    deadline_epoch: float


@dataclass
class StudySession:
    """One observer working through one deck. Mutations are single-writer."""

    session_id: str
    observer: str
    deck: StudyDeck
    per_image_seconds: float = 12.0
    grace_seconds: float = 1.0
    clock: Callable[[], float] = time.time
    cursor: int = 0
    current_deadline: float | None = None
    responses: list[Response] = field(default_factory=list)

    @classmethod
    def create(
        cls,
        observer: str,
        deck: StudyDeck,
        per_image_seconds: float = 12.0,
        grace_seconds: float = 1.0,
        clock: Callable[[], float] = time.time,
    ) -> "StudySession":
        return cls(
            session_id=uuid.uuid4().hex,
            observer=observer,
            deck=deck,
            per_image_seconds=per_image_seconds,
            grace_seconds=grace_seconds,
            clock=clock,
        )

    @property
    def complete(self) -> bool:
        return self.cursor >= len(self.deck.items)


def next_item(session: StudySession) -> NextItem | None:
    """The current unanswered item, or None when the deck is done.

    The deadline is stamped at first delivery only; re-fetching the same
    item returns the original deadline unchanged.
    """
    if session.complete:
        return None
    if session.current_deadline is None:
        session.current_deadline = session.clock() + session.per_image_seconds
    item = session.deck.items[session.cursor]
    return NextItem(
        image_id=item.image_id,
        file_ref=item.file_ref,
        index=session.cursor,
        total=len(session.deck.items),
        deadline_epoch=session.current_deadline,
    )


def record_response(
    session: StudySession, image_id: str, value: float, client_elapsed: float
) -> Literal["accepted", "timed_out"]:
    """Store a response for the current item; late ones are coerced to 0.5.

    The deadline is server-authoritative: client_elapsed is recorded but
    never consulted for timeout decisions.
    """
    if session.complete:
        raise SequencingError("session already complete")
    if value not in ALLOWED_VALUES:
        raise ValueError(f"value must be one of {ALLOWED_VALUES}, got {value}")
    current = session.deck.items[session.cursor]
    if image_id != current.image_id:
        answered = {r.image_id for r in session.responses}
        if image_id in answered:
            raise ConflictError(f"image {image_id} already answered")
        raise SequencingError(
            f"expected response for {current.image_id}, got {image_id}"
        )
    if session.current_deadline is None:
        raise SequencingError("item was never delivered; fetch it before responding")

    late = session.clock() > session.current_deadline + session.grace_seconds
    stored = Response(
        image_id=image_id,
        value=0.5 if late else value,
        elapsed=max(client_elapsed, 0.0),
        timed_out=late,
    )
    session.responses.append(stored)
    session.cursor += 1
    session.current_deadline = None
    return "timed_out" if late else "accepted"


def score_responses(deck: StudyDeck, responses: list[Response]) -> SessionReport:
    """Fractional-certainty confusion counts and derived metrics."""
    truth = {it.image_id: it.truth for it in deck.items}
    tp = tn = fp = fn = 0.0
    u = 0
    for r in responses:
        if r.image_id not in truth:
            raise DataError(f"response for unknown image {r.image_id}")
        if r.value == 0.5:
            u += 1
        if truth[r.image_id] == "fake":
            tp += r.value
            fn += 1.0 - r.value
        else:
            fp += r.value
            tn += 1.0 - r.value
    total = tp + tn + fp + fn
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    accuracy = (tp + tn) / total if total > 0 else 0.0
    return SessionReport(tp=tp, tn=tn, fp=fp, fn=fn, u=u,
                         precision=precision, recall=recall, accuracy=accuracy)


def score_session(session: StudySession) -> SessionReport:
    if not session.complete:
        raise SequencingError(
            f"session has {len(session.responses)}/{len(session.deck.items)} responses"
        )
    return score_responses(session.deck, session.responses)


def session_roc(session: StudySession):
    """ROC of the response values against deck truth (fake = positive)."""
    if not session.complete:
        raise SequencingError("session incomplete")
    truth = {it.image_id: it.truth for it in session.deck.items}
    items = [ScoredLabel(score=r.value, label=truth[r.image_id])
             for r in session.responses]
    return roc_curve(items)


def transcript_csv(session: StudySession) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["index", "image_id", "truth", "value", "elapsed", "timed_out"])
    truth = {it.image_id: it.truth for it in session.deck.items}
    for i, r in enumerate(session.responses):
        writer.writerow([i, r.image_id, truth[r.image_id], r.value, r.elapsed,
                         int(r.timed_out)])
    return buf.getvalue()


def session_to_dict(session: StudySession) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "session_id": session.session_id,
        "observer": session.observer,
        "per_image_seconds": session.per_image_seconds,
        "grace_seconds": session.grace_seconds,
        "cursor": session.cursor,
        "current_deadline": session.current_deadline,
        "deck": {
            "seed": session.deck.seed,
            "items": [
                {"image_id": it.image_id, "file_ref": it.file_ref, "truth": it.truth}
                for it in session.deck.items
            ],
        },
        "responses": [
            {"image_id": r.image_id, "value": r.value, "elapsed": r.elapsed,
             "timed_out": r.timed_out}
            for r in session.responses
        ],
    }


def session_from_dict(data: dict, clock: Callable[[], float] = time.time) -> StudySession:
    if data.get("schema") != SCHEMA_VERSION:
        raise DataError(f"unsupported session schema {data.get('schema')}")
    deck = StudyDeck(
        items=tuple(
            DeckItem(image_id=it["image_id"], file_ref=it["file_ref"], truth=it["truth"])
            for it in data["deck"]["items"]
        ),
        seed=int(data["deck"]["seed"]),
    )
    session = StudySession(
        session_id=data["session_id"],
        observer=data["observer"],
        deck=deck,
        per_image_seconds=float(data["per_image_seconds"]),
        grace_seconds=float(data["grace_seconds"]),
        clock=clock,
        cursor=int(data["cursor"]),
        current_deadline=data.get("current_deadline"),
        responses=[
            Response(image_id=r["image_id"], value=float(r["value"]),
                     elapsed=float(r["elapsed"]), timed_out=bool(r["timed_out"]))
            for r in data["responses"]
        ],
    )
    return session


class SessionStore:
    """One JSON file per session, written atomically on every mutation."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._guard = threading.Lock()

    def lock(self, session_id: str) -> threading.Lock:
        with self._guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def path(self, session_id: str) -> Path:
        return self.root / f"{session_id}.json"

    def save(self, session: StudySession) -> None:
        target = self.path(session.session_id)
        tmp = target.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(session_to_dict(session), indent=1))
        tmp.replace(target)

    def load(self, session_id: str, clock: Callable[[], float] = time.time) -> StudySession:
        target = self.path(session_id)
        if not target.is_file():
            raise KeyError(session_id)
        return session_from_dict(json.loads(target.read_text()), clock=clock)

    def list_ids(self) -> list[str]:
        return sorted(p.stem for p in self.root.glob("*.json"))
