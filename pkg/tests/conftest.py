from __future__ import annotations

import pytest

from multiview_absa.schema import make_task

import table8

REST_CATEGORIES = (
    "AMBIENCE#GENERAL",
    "DRINKS#QUALITY",
    "DRINKS#STYLE_OPTIONS",
    "FOOD#GENERAL",
    "FOOD#PRICES",
    "FOOD#QUALITY",
    "FOOD#STYLE_OPTIONS",
    "LOCATION#GENERAL",
    "RESTAURANT#GENERAL",
    "RESTAURANT#MISCELLANEOUS",
    "RESTAURANT#PRICES",
    "SERVICE#GENERAL",
    "DRINKS#PRICES",
)


@pytest.fixture(scope="session")
def asqp_task():
    return make_task("asqp", "rest15", REST_CATEGORIES)


@pytest.fixture(scope="session")
def acos_task():
    return make_task("acos", "rest", REST_CATEGORIES)


@pytest.fixture(scope="session")
def aste_task():
    return make_task("aste", "rest16")


@pytest.fixture(scope="session")
def tasd_task():
    return make_task("tasd", "rest15", REST_CATEGORIES)


@pytest.fixture(scope="session")
def all_tasks(asqp_task, acos_task, aste_task, tasd_task):
    return (asqp_task, acos_task, aste_task, tasd_task)


@pytest.fixture(scope="session")
def benchmark_files(tmp_path_factory):
    """Synthetic benchmark files matching the published split statistics."""
    root = tmp_path_factory.mktemp("benchmarks")
    return table8.generate_all(root)


@pytest.fixture(scope="session")
def benchmark_expect_file(tmp_path_factory):
    return table8.write_expectations(tmp_path_factory.mktemp("expect") / "table8.json")
