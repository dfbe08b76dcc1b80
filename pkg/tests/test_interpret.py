import logging

import numpy as np
import pytest

from errors import ShapeError, UndefinedInterpretationError
from interpret import class_mean_report, gamma, interpret_samples, thetas
from models import ClassLabel, EigenBasis, InterpretationRecord

N_PIXELS = 50


def orthonormal_basis(k: int, seed: int = 0) -> EigenBasis:
    """Basis with k random orthonormal modes."""
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((N_PIXELS, k)))
    return EigenBasis(
        mean_image=np.zeros(N_PIXELS), modes=Q, singular_values=np.linspace(k, 1, k)
    )


@pytest.fixture
def samples() -> np.ndarray:
    return np.random.default_rng(7).standard_normal((N_PIXELS, 1000))


def test_thetas_sum_to_one(samples: np.ndarray):
    """Over 1000 random samples every theta vector sums to 1 within 1e-12."""
    basis = orthonormal_basis(4)
    for b in samples.T:
        t = thetas(b, basis)
        assert np.all(t >= 0)
        assert abs(t.sum() - 1.0) <= 1e-12


def test_gamma_is_a_fraction(samples: np.ndarray):
    basis = orthonormal_basis(4)
    values = [gamma(b, basis) for b in samples.T]
    assert min(values) >= 0.0 and max(values) <= 1.0


def test_gamma_grows_with_retained_modes(samples: np.ndarray):
    """Adding modes never lowers the explained fraction."""
    full = orthonormal_basis(4)
    prefixes = [
        EigenBasis(full.mean_image, full.modes[:, :k], full.singular_values[:k])
        for k in range(1, 5)
    ]
    for b in samples[:, :100].T:
        values = [gamma(b, basis) for basis in prefixes]
        assert all(a <= b_ + 1e-15 for a, b_ in zip(values, values[1:]))


@pytest.mark.parametrize("scale", [-3.0, 0.5, 10.0])
def test_thetas_are_scale_invariant(samples: np.ndarray, scale: float):
    basis = orthonormal_basis(4)
    for b in samples[:, :100].T:
        np.testing.assert_allclose(thetas(scale * b, basis), thetas(b, basis), atol=1e-12)


def test_sample_inside_the_span_is_fully_explained():
    basis = orthonormal_basis(4)
    b = basis.modes @ np.array([3.0, 0.0, 4.0, 0.0])

    assert gamma(b, basis) == pytest.approx(1.0)
    np.testing.assert_allclose(thetas(b, basis), [0.36, 0.0, 0.64, 0.0], atol=1e-12)


def test_zero_sample_is_undefined():
    basis = orthonormal_basis(4)
    with pytest.raises(UndefinedInterpretationError):
        gamma(np.zeros(N_PIXELS), basis)
    with pytest.raises(UndefinedInterpretationError):
        thetas(np.zeros(N_PIXELS), basis)


def test_orthogonal_sample_has_no_thetas():
    """A sample outside the retained span has Gamma = 0 and no thetas."""
    axes = np.eye(N_PIXELS)
    basis = EigenBasis(np.zeros(N_PIXELS), axes[:, :4], np.ones(4))
    b = axes[:, 5]

    assert gamma(b, basis) == 0.0
    with pytest.raises(UndefinedInterpretationError):
        thetas(b, basis)


def test_wrong_pixel_count_is_rejected():
    basis = orthonormal_basis(4)
    with pytest.raises(ShapeError):
        gamma(np.ones(N_PIXELS + 1), basis)


def test_precomputed_features_match(samples: np.ndarray):
    """Passing t_i gives the same answer as projecting inside."""
    basis = orthonormal_basis(4)
    b = samples[:, 0]
    t = basis.modes.T @ b
    assert gamma(b, basis, t) == pytest.approx(gamma(b, basis))
    np.testing.assert_allclose(thetas(b, basis, t), thetas(b, basis))


def test_vectorized_path_matches_per_sample(samples: np.ndarray):
    basis = orthonormal_basis(4)
    labels = [ClassLabel.parse("IR1")] * samples.shape[1]
    records = interpret_samples(samples, basis, labels=labels)

    assert len(records) == 1000
    for record in records[:50]:
        b = samples[:, record.sample_id]
        assert record.gamma == pytest.approx(gamma(b, basis))
        np.testing.assert_allclose(record.thetas, thetas(b, basis), atol=1e-14)
        assert record.label == labels[0]


def test_vectorized_path_rejects_zero_columns(samples: np.ndarray):
    basis = orthonormal_basis(4)
    B = samples[:, :5].copy()
    B[:, 2] = 0.0
    with pytest.raises(UndefinedInterpretationError):
        interpret_samples(B, basis)


def records_for(code: str, count: int, seed: int) -> list[InterpretationRecord]:
    rng = np.random.default_rng(seed)
    label = ClassLabel.parse(code)
    records = []
    for i in range(count):
        raw = rng.random(4)
        records.append(
            InterpretationRecord(
                sample_id=i, gamma=float(rng.random()), thetas=raw / raw.sum(), label=label
            )
        )
    return records


def test_class_mean_rows_sum_to_one():
    records = records_for("B1", 400, 1) + records_for("OR4", 350, 2)
    rows = class_mean_report(records, 300, seed=3)

    assert [str(row.label) for row in rows] == ["B1", "OR4"]
    assert all(row.n_samples == 300 for row in rows)
    for row in rows:
        assert abs(row.mean_thetas.sum() - 1.0) <= 1e-12


def test_class_mean_clamps_small_classes(caplog: pytest.LogCaptureFixture):
    """Asking for 300 samples of a 150-sample class uses all 150 with a warning."""
    records = records_for("IR2", 150, 4)
    with caplog.at_level(logging.WARNING):
        rows = class_mean_report(records, 300, seed=0)

    assert rows[0].n_samples == 150
    np.testing.assert_allclose(
        rows[0].mean_thetas, np.mean([r.thetas for r in records], axis=0)
    )
    assert "using all 150" in caplog.text


def test_class_mean_sampling_is_seeded():
    records = records_for("B3", 200, 5)
    first = class_mean_report(records, 50, seed=9)[0]
    second = class_mean_report(records, 50, seed=9)[0]
    np.testing.assert_array_equal(first.mean_thetas, second.mean_thetas)


def test_requested_class_without_records_is_skipped(caplog: pytest.LogCaptureFixture):
    records = records_for("B1", 10, 6)
    with caplog.at_level(logging.WARNING):
        rows = class_mean_report(
            records, 5, classes=[ClassLabel.parse("B1"), ClassLabel.parse("IR1")]
        )

    assert [str(row.label) for row in rows] == ["B1"]
    assert "IR1" in caplog.text
