import json
from pathlib import Path

import numpy as np
import pytest
import torch

from pdfir import build_org, convert_document, parse_document, pdf_to_org
from pdfir.synthetic import figure1a_pdf, generate_corpus

FIXTURES = Path(__file__).parent / "fixtures" / "malformed"


def central_difference(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Numerical gradient of a scalar function of a float64 array."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f(x)
        flat[i] = old - h
        down = f(x)
        flat[i] = old
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12))


def check_module_gradients(module: torch.nn.Module, loss_fn, tol: float = 1e-4) -> dict[str, float]:
    """Compare autograd and central differences for every trainable tensor of ``module``."""
    module.double()
    errors = {}
    for name, param in module.named_parameters():
        if not param.requires_grad:
            continue
        module.zero_grad()
        loss_fn().backward()
        analytic = param.grad.detach().numpy().copy()

        def f(values, param=param):
            with torch.no_grad():
                saved = param.detach().clone()
                param.copy_(torch.from_numpy(values))
                out = float(loss_fn())
                param.copy_(saved)
            return out

        numeric = central_difference(f, param.detach().numpy().copy())
        errors[name] = relative_error(analytic, numeric)
    bad = {k: v for k, v in errors.items() if not v < tol}
    assert not bad, bad
    return errors


@pytest.fixture(scope="session")
def fig_program():
    return convert_document(parse_document(figure1a_pdf()))


@pytest.fixture(scope="session")
def fig_org(fig_program):
    return build_org(fig_program)


@pytest.fixture(scope="session")
def small_orgs():
    data = generate_corpus(6, 6, seed=3)
    return [pdf_to_org(d) for d, _ in data], [y for _, y in data]


@pytest.fixture(scope="session")
def fixture_set():
    expected = json.loads((FIXTURES / "expected.json").read_text())
    return [(name, (FIXTURES / f"{name}.pdf").read_bytes(), frozenset(codes))
            for name, codes in sorted(expected.items())]


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, title: str, ok: bool, detail: str = "") -> None:
    """Print one PASS/FAIL line for an acceptance criterion and keep it for the summary."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else "")
    print(line)
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
