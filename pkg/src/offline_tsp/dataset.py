"""Historical (instance, route, length) records and their JSON-lines files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from offline_tsp.errors import InvalidArgumentError, InvalidRouteError, ValidationError
from offline_tsp.tsp import ProblemInstance, check_route, sample_instance, tour_length

TRAIN_KEYS = ("id", "cities", "route", "length")
TEST_KEYS = ("id", "cities")
LENGTH_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TrainingRecord:
    id: int
    instance: ProblemInstance
    route: np.ndarray = field(repr=False)
    length: float

    def __eq__(self, other):
        if not isinstance(other, TrainingRecord):
            return NotImplemented
        return (
            self.id == other.id
            and self.instance == other.instance
            and np.array_equal(self.route, other.route)
            and self.length == other.length
        )


@dataclass(frozen=True)
class TestRecord:
    __test__ = False  # not a pytest class

    id: int
    instance: ProblemInstance


@dataclass(frozen=True)
class Dataset:
    kind: str
    records: tuple = ()

    def __post_init__(self):
        if self.kind not in ("train", "test"):
            raise InvalidArgumentError(f"kind must be 'train' or 'test', got {self.kind!r}")
        object.__setattr__(self, "records", tuple(self.records))
        ids = [r.id for r in self.records]
        if any(b <= a for a, b in zip(ids, ids[1:])):
            raise ValidationError("record ids must be unique and strictly increasing")

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def get(self, record_id: int):
        for r in self.records:
            if r.id == record_id:
                return r
        raise KeyError(record_id)


def make_training_record(id: int, instance: ProblemInstance, route) -> TrainingRecord:
    order = check_route(route, instance.n)
    order.setflags(write=False)
    return TrainingRecord(id, instance, order, tour_length(instance, order))


def generate_training_set(count: int, n: int, rng: np.random.Generator) -> Dataset:
    """``count`` instances of ``n`` uniform cities, each paired with one uniformly random route."""
    if count < 0:
        raise InvalidArgumentError(f"count must be >= 0, got {count}")
    if n < 2:
        raise InvalidArgumentError(f"n must be >= 2, got {n}")
    records = []
    for i in range(count):
        instance = sample_instance(n, rng, id=i)
        records.append(make_training_record(i, instance, rng.permutation(n)))
    return Dataset("train", records)


def generate_test_set(count: int, n_min: int, n_max: int, rng: np.random.Generator) -> Dataset:
    if count < 0:
        raise InvalidArgumentError(f"count must be >= 0, got {count}")
    if n_min < 2 or n_max < n_min:
        raise InvalidArgumentError(f"need 2 <= n_min <= n_max, got [{n_min}, {n_max}]")
    records = []
    for i in range(count):
        n = int(rng.integers(n_min, n_max, endpoint=True))
        records.append(TestRecord(i, sample_instance(n, rng, id=i)))
    return Dataset("test", records)


def record_to_json(record) -> str:
    obj = {"id": record.id, "cities": record.instance.cities.tolist()}
    if isinstance(record, TrainingRecord):
        obj["route"] = [int(v) for v in record.route]
        obj["length"] = float(record.length)
    # json floats use repr(), the shortest string that parses back exactly
    return json.dumps(obj, allow_nan=False)


def write_dataset(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for record in dataset.records:
            fh.write(record_to_json(record))
            fh.write("\n")


def _parse_line(text: str, lineno: int, kind: str):
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed JSON: {exc.msg}", line=lineno) from None
    if not isinstance(obj, dict):
        raise ValidationError("record must be a JSON object", line=lineno)
    expected = TRAIN_KEYS if kind == "train" else TEST_KEYS
    if tuple(obj) != expected:
        raise ValidationError(f"expected fields {list(expected)}, got {list(obj)}", line=lineno)

    rid = obj["id"]
    if not isinstance(rid, int) or isinstance(rid, bool):
        raise ValidationError("id must be an integer", line=lineno)
    cities = obj["cities"]
    if not isinstance(cities, list) or not all(
        isinstance(c, list)
        and len(c) == 2
        and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in c)
        for c in cities
    ):
        raise ValidationError("cities must be a list of [x, y] number pairs", line=lineno)
    try:
        instance = ProblemInstance(rid, np.array(cities, dtype=np.float64).reshape(-1, 2))
    except InvalidArgumentError as exc:
        raise ValidationError(str(exc), line=lineno) from None
    if kind == "test":
        return TestRecord(rid, instance)

    route = obj["route"]
    if not isinstance(route, list) or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in route
    ):
        raise ValidationError("route must be a list of integers", line=lineno)
    length = obj["length"]
    if not isinstance(length, (int, float)) or isinstance(length, bool):
        raise ValidationError("length must be a number", line=lineno)
    try:
        order = check_route(np.array(route, dtype=np.int64), instance.n)
    except InvalidRouteError as exc:
        raise ValidationError(str(exc), line=lineno) from None
    true_length = tour_length(instance, order)
    if abs(true_length - length) > LENGTH_TOL:
        raise ValidationError(
            f"recorded length {length!r} disagrees with tour length {true_length!r}", line=lineno
        )
    order.setflags(write=False)
    return TrainingRecord(rid, instance, order, float(length))


def read_dataset(path, kind: str) -> Dataset:
    """Load a JSON-lines dataset of the declared ``kind`` ('train' or 'test')."""
    if kind not in ("train", "test"):
        raise InvalidArgumentError(f"kind must be 'train' or 'test', got {kind!r}")
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if not text.strip():
                continue
            record = _parse_line(text, lineno, kind)
            if records and record.id <= records[-1].id:
                raise ValidationError("ids must be unique and strictly increasing", line=lineno)
            records.append(record)
    return Dataset(kind, records)


def sniff_kind(path) -> str:
    """Guess whether a dataset file holds training or test records from its first line."""
    with open(path, encoding="utf-8") as fh:
        for lineno, text in enumerate(fh, start=1):
            if text.strip():
                try:
                    obj = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise ValidationError(f"malformed JSON: {exc.msg}", line=lineno) from None
                return "train" if isinstance(obj, dict) and "route" in obj else "test"
    return "test"


def load_any(path) -> Dataset:
    return read_dataset(path, sniff_kind(Path(path)))
