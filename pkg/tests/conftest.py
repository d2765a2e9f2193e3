"""Shared fixtures: the program corpus and its frozen expectations."""

from __future__ import annotations

import json
import pathlib

import pytest

from sessionpi.surface import parse_program

CORPUS = pathlib.Path(__file__).resolve().parent.parent / "corpus"


@pytest.fixture(scope="session")
def manifest() -> dict:
    return json.loads((CORPUS / "manifest.json").read_text())


@pytest.fixture(scope="session")
def corpus_entries(manifest) -> list[dict]:
    return manifest["programs"]


def corpus_path(name: str) -> pathlib.Path:
    return CORPUS / name


def corpus_text(name: str) -> str:
    return corpus_path(name).read_text()


def load_corpus_program(file_name: str):
    return parse_program(corpus_text(file_name))


def expected_log(file_name: str) -> list[str]:
    text = corpus_text(file_name.replace(".pi", ".log"))
    return text.splitlines()


def expected_signatures(file_name: str) -> list[str]:
    text = corpus_text(file_name.replace(".pi", ".expect"))
    return [line for line in text.splitlines() if line.strip()]


def script_lines(entry: dict) -> list[str] | None:
    if "script" not in entry:
        return None
    return corpus_text(entry["script"]).rstrip("\n").splitlines()
