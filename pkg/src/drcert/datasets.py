"""Dataset ingestion and deterministic synthetic generators.

Regression CSVs carry the header ``x1,x2,y``; classification CSVs carry
``label,p1,...,p_{side^2}`` with pixels in [0, 1].  A path of the form
``synthetic:`` (optionally ``synthetic:N``) switches to the seeded generator:
a radial travel-time field for regression, noisy class prototypes for
classification.  Images rescale between grid sides by area averaging (down)
or nearest replication (up) so that dimension sweeps stay comparable.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError, ParseError, RangeError

N_CLASSES = 10


def _synthetic_count(path, default=200):
    tag = str(path)[len("synthetic:"):]
    if not tag:
        return default
    try:
        n = int(tag)
    except ValueError as exc:
        raise DataError(f"bad synthetic size {tag!r}") from exc
    if n < 2:
        raise DataError("synthetic datasets need at least two rows")
    return n


def synthetic_regression(n: int, seed: int = 0, center=(0.5, 0.5), scale: float = 1.0,
                         noise: float = 0.05):
    """Radial travel-time proxy: y = scale * ||x - center|| * (1 + noise)."""
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, 2))
    base = scale * np.linalg.norm(X - np.asarray(center), axis=1)
    y = base * (1.0 + noise * rng.normal(size=n))
    return X, np.maximum(y, 0.0)


def ingest_regression_csv(path, normalize: bool = False, seed: int = 0):
    """Parse an ``x1,x2,y`` CSV (or generate ``synthetic:N`` data)."""
    if str(path).startswith("synthetic:"):
        X, y = synthetic_regression(_synthetic_count(path), seed=seed)
    else:
        rows = []
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "x1,x2,y":
                raise ParseError(f"expected header 'x1,x2,y', got {header!r}", line=1)
            for lineno, line in enumerate(fh, start=2):
                line = line.strip()
                if not line:
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise ParseError(f"expected 3 fields, got {len(parts)}", line=lineno)
                try:
                    rows.append([float(p) for p in parts])
                except ValueError as exc:
                    raise ParseError(str(exc), line=lineno) from exc
        if not rows:
            raise DataError("empty regression dataset")
        arr = np.asarray(rows, dtype=float)
        X, y = arr[:, :2], arr[:, 2]
    if normalize:
        lo, hi = X.min(axis=0), X.max(axis=0)
        span = np.where(hi > lo, hi - lo, 1.0)
        X = (X - lo) / span
    return X, y


def synthetic_classification(n: int, side: int, seed: int = 0, noise: float = 0.25):
    """Digit-like grids: one seeded prototype per class plus uniform noise."""
    rng = np.random.default_rng(seed)
    proto_rng = np.random.default_rng(12345)  # prototypes shared across seeds
    protos = proto_rng.uniform(0.0, 1.0, size=(N_CLASSES, side * side))
    labels = rng.integers(0, N_CLASSES, size=n)
    X = np.clip(protos[labels] + noise * rng.uniform(-1.0, 1.0, size=(n, side * side)),
                0.0, 1.0)
    Y = np.zeros((n, N_CLASSES))
    Y[np.arange(n), labels] = 1.0
    return X, Y


def ingest_classification_csv(path, side: int, seed: int = 0):
    """Parse a ``label,p1..p_{side^2}`` CSV (or generate ``synthetic:N``)."""
    if str(path).startswith("synthetic:"):
        return synthetic_classification(_synthetic_count(path), side, seed=seed)
    n_pix = side * side
    X_rows, labels = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        expected = "label," + ",".join(f"p{k}" for k in range(1, n_pix + 1))
        if header != expected:
            raise ParseError(f"expected header 'label,p1..p{n_pix}'", line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != n_pix + 1:
                raise ParseError(f"expected {n_pix + 1} fields, got {len(parts)}",
                                 line=lineno)
            try:
                label = int(parts[0])
                pixels = [float(p) for p in parts[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from exc
            if not 0 <= label < N_CLASSES:
                raise RangeError(f"line {lineno}: label {label} outside 0..9")
            if any(p < 0.0 or p > 1.0 for p in pixels):
                raise RangeError(f"line {lineno}: pixel outside [0, 1]")
            labels.append(label)
            X_rows.append(pixels)
    if not X_rows:
        raise DataError("empty classification dataset")
    X = np.asarray(X_rows, dtype=float)
    Y = np.zeros((len(labels), N_CLASSES))
    Y[np.arange(len(labels)), labels] = 1.0
    return X, Y


def _downscale_matrix(side_in: int, side_out: int) -> np.ndarray:
    """Row-stochastic overlap weights for exact area averaging."""
    M = np.zeros((side_out, side_in))
    ratio = side_in / side_out
    for i in range(side_out):
        lo, hi = i * ratio, (i + 1) * ratio
        for j in range(side_in):
            M[i, j] = max(0.0, min(hi, j + 1) - max(lo, j))
    return M / ratio


def rescale_images(X: np.ndarray, side_in: int, side_out: int) -> np.ndarray:
    """Resample flattened side_in x side_in images to side_out x side_out.

    Downscaling averages by pixel-area overlap; upscaling replicates the
    nearest source pixel.  Values stay inside [0, 1].
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != side_in * side_in:
        raise DataError(f"expected {side_in * side_in} pixels per row")
    if side_out == side_in:
        return X.copy()
    imgs = X.reshape(-1, side_in, side_in)
    if side_out < side_in:
        M = _downscale_matrix(side_in, side_out)
        out = np.einsum("oi,nij,pj->nop", M, imgs, M)
    else:
        idx = np.minimum((np.arange(side_out) * side_in) // side_out, side_in - 1)
        out = imgs[:, idx][:, :, idx]
    return out.reshape(X.shape[0], side_out * side_out)


def split_train_test(X, Y, test_frac: float = 0.2, seed: int = 0):
    """Deterministic shuffled split."""
    n = X.shape[0]
    n_test = max(1, int(round(test_frac * n)))
    if n_test >= n:
        raise DataError("dataset too small to split")
    order = np.random.default_rng(seed).permutation(n)
    test, train = order[:n_test], order[n_test:]
    return (X[train], Y[train]), (X[test], Y[test])
