"""
Общие фикстуры тестов: эталонная модель, окружение и свежий контекст.
"""

from pathlib import Path

import pytest

from core.data_io import load_model_files
from core.lattice import reference_lattice

ROOT = Path(__file__).resolve().parent.parent
FIXTURES = ROOT / "fixtures"

REFERENCE = str(FIXTURES / "reference.trust")
EVIL_MAID_CASE = str(FIXTURES / "evil_maid_case.trust")
EVIL_MAID_ERROR = str(FIXTURES / "evil_maid_error.trust")
BOOT_RUN_SHUTDOWN = str(FIXTURES / "boot_run_shutdown.trust")
ALL_FIXTURES = [REFERENCE, EVIL_MAID_CASE, EVIL_MAID_ERROR, BOOT_RUN_SHUTDOWN]


def load(*paths):
    model, diagnostics = load_model_files(list(paths))
    errors = [d for d in diagnostics if d.severity == "error"]
    assert model is not None, "\n".join(str(d) for d in errors)
    return model


@pytest.fixture(scope="session")
def reference_model():
    return load(REFERENCE)


@pytest.fixture(scope="session")
def full_model():
    """Эталон вместе со сценариями и политикой error_routing_verify"""
    return load(*ALL_FIXTURES)


@pytest.fixture
def env(reference_model):
    return reference_model.environment()


@pytest.fixture
def ctx(reference_model):
    return reference_model.new_context()


@pytest.fixture
def full_env(full_model):
    return full_model.environment()


@pytest.fixture
def full_ctx(full_model):
    return full_model.new_context()


@pytest.fixture
def lattice():
    return reference_lattice()
