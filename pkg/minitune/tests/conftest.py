"""Shared toy corpus fixtures.

The corpus mimics the instruction-dataset shape the harness consumes: a
constant instruction carrying the candidate category list, inputs naming
the origin categories and a clock time, outputs naming destination
categories and a travel cost. The destination rule is a deterministic
function of (origin pair, hour) so the mapping is consistent and
memorizable.
"""

import json

import pytest

CATEGORIES = (
    "Bakery",
    "Harbor",
    "Museum",
    "Stadium",
    "Library",
    "Cinema",
    "Garden",
    "Foundry",
)

INSTRUCTION = (
    "Given the starting place and time of a taxi trajectory in Avalon, "
    "predict the most likely destination and how far it is from the starting "
    "point.\n"
    'Please use the provided "Candidate POIs" list to describe the starting '
    "place and destination.\n"
    "Candidate POIs: [" + ", ".join(CATEGORIES) + "]"
)


def make_record(origin_names, time_text, dest_names, cost_km) -> dict:
    return {
        "instruction": INSTRUCTION,
        "input": (
            f"Starting place: [{', '.join(origin_names)}], "
            f"Starting time: [{time_text}]"
        ),
        "output": (
            f'"POIs": [{", ".join(dest_names)}], '
            f'"traveling cost": [{cost_km:.1f} kilometers]'
        ),
    }


def toy_records(n: int) -> list:
    """``n`` records with a deterministic (origin, hour) -> destination rule."""
    records = []
    for i in range(n):
        origin = [CATEGORIES[i % 8], CATEGORIES[(i + 3) % 8]]
        hour = 7 + (i % 5) * 3
        minute = (11 * i) % 60
        key = (i % 8 + hour) % 8
        dest = [CATEGORIES[key], CATEGORIES[(key + 2) % 8]][: 1 + key % 2]
        cost = 0.4 + key * 0.6
        records.append(make_record(origin, f"{hour:02d}:{minute:02d}", dest, cost))
    return records


def write_jsonl(path, records) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


@pytest.fixture(scope="session")
def toy_dataset_20(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "toy20.jsonl"
    records = toy_records(20)
    write_jsonl(path, records)
    return path, records
