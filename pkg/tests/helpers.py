import numpy as np

from vitpos import tensor as T

# filled by test_acceptance, printed by conftest at the end of the session
ACCEPTANCE_LINES: list[str] = []


def record(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def numeric_grad(f, arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``arr`` (mutated in place)."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        up = f()
        arr[i] = old - h
        down = f()
        arr[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_grads(build, leaves, h: float = 1e-5) -> float:
    """Max relative error between tape gradients and finite differences.

    ``build()`` returns a scalar Tensor computed from ``leaves``.
    """
    with T.GradTape() as tape:
        loss = build()
    grads = T.backward(tape, loss, wrt=leaves)
    worst = 0.0
    for leaf in leaves:
        num = numeric_grad(lambda: build().item(), leaf.data, h)
        worst = max(worst, rel_error(grads[leaf], num))
    return worst
