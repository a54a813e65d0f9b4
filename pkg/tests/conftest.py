from __future__ import annotations

from importlib import resources

import pytest

from agentspec import Corpus, load_builtin

DATA = resources.files("agentspec").joinpath("data")


def data_path(name: str) -> str:
    return str(DATA / name)


def golden(name: str) -> str:
    return (DATA / name).read_text(encoding="utf-8").removesuffix("\n")


@pytest.fixture(scope="session")
def react():
    return load_builtin("react")


@pytest.fixture(scope="session")
def pass_agent():
    return load_builtin("pass")


@pytest.fixture(scope="session")
def direct():
    return load_builtin("direct")


@pytest.fixture(scope="session")
def cot():
    return load_builtin("cot")


@pytest.fixture(scope="session")
def corpus():
    return Corpus.load(data_path("simpsons_corpus.jsonl"))


FIGURE1_QUESTION = (
    'Musician and satirist Allie Goertz wrote a song about the "The Simpsons" '
    "character Milhouse, who Matt Groening named after who?"
)
FIGURE7_QUESTION = "Who was born first, Yanka Dyagileva or Alexander Bashlachev?"
