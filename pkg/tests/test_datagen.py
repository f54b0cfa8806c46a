import numpy as np
import pytest

from seqanon.core import Dataset, encode
from seqanon.datagen import (
    GenConfig,
    GenConfigError,
    MatrixSet,
    active_fraction,
    estimate_matrices,
    kl_divergence,
    marginal,
    random_matrices,
    read_matrices,
    read_outcomes,
    simulate,
    synth_outcomes,
    write_matrices,
    write_outcomes,
)
from seqanon.core import DataValidationError


def one_subject(symbols):
    return Dataset(("x",), encode(symbols)[None, :])


def test_all_stationary_hour():
    m = estimate_matrices(one_subject("S" * 60)).matrices[0, 0]
    # 59 S->S transitions plus one pseudo-count, over 59 + 4
    assert m[0, 0] == pytest.approx(60 / 63)
    assert m[0, 1] == pytest.approx(1 / 63)
    # unseen rows stay uniform
    assert np.allclose(m[1], 0.25)


def test_alternating_hour():
    m = estimate_matrices(one_subject("SW" * 30)).matrices[0, 0]
    assert m[0, 1] == pytest.approx(31 / 34)  # 30 S->W transitions
    assert m[1, 0] == pytest.approx(30 / 33)  # 29 W->S transitions
    assert m[0, 1] > 0.9 and m[1, 0] > 0.9


def test_random_labels_give_near_uniform_rows():
    rng = np.random.default_rng(0)
    ds = Dataset(("x",), rng.integers(0, 4, (1, 60 * 2000)).astype(np.int8))
    m = estimate_matrices(ds).matrices[0]
    assert np.all(np.abs(m.mean(axis=0) - 0.25) <= 0.05)


def test_estimated_rows_are_stochastic():
    rng = np.random.default_rng(1)
    ms = estimate_matrices(Dataset(("a", "b"), rng.integers(0, 4, (2, 180)).astype(np.int8)))
    assert ms.matrices.shape == (2, 3, 4, 4)
    assert np.allclose(ms.matrices.sum(axis=-1), 1)
    assert np.all(ms.matrices > 0)


def test_estimate_rejects_partial_hours():
    with pytest.raises(DataValidationError):
        estimate_matrices(one_subject("S" * 90))


def constant_set(n, hours, matrix, start):
    return MatrixSet(tuple(f"m{i}" for i in range(n)), np.broadcast_to(matrix, (n, hours, 4, 4)).copy(), start)


def test_identity_chain_stays_put():
    ms = constant_set(3, 5, np.eye(4), [1, 0, 0, 0])
    ds = simulate(GenConfig(3, hours=5, seed=2), ms)
    assert np.all(ds.codes == 0)


def test_uniform_chain_frequencies():
    ms = constant_set(1, 336, np.full((4, 4), 0.25), [0.25] * 4)
    ds = simulate(GenConfig(1, hours=336, seed=3), ms)
    assert ds.codes.shape == (1, 20160)
    assert np.all(np.abs(marginal(ds) - 0.25) <= 0.02)


def test_no_mixing_ignores_other_subjects():
    a = random_matrices(4, 24, seed=1)
    b_mats = a.matrices.copy()
    b_mats[1:] = random_matrices(3, 24, seed=99).matrices
    b = MatrixSet(a.subject_ids, b_mats, a.start)
    cfg = GenConfig(4, hours=24, mix_prob=0.0, seed=5)
    # subject 0 owns matrix 0 in both sets
    assert np.array_equal(simulate(cfg, a).codes[0], simulate(cfg, b).codes[0])


def test_full_mixing_uses_other_subjects():
    ms = MatrixSet(("s", "r"), np.stack([np.broadcast_to(np.eye(4), (10, 4, 4))] * 2), [1, 0, 0, 0])
    mats = ms.matrices.copy()
    mats[1] = 0
    mats[1, :, :, 2] = 1  # subject 1 always jumps to R
    ms = MatrixSet(ms.subject_ids, mats, ms.start)
    out = simulate(GenConfig(2, hours=10, mix_prob=1.0, seed=0), ms)
    # subject 0 always borrows subject 1's matrices and vice versa
    assert np.all(out.codes[0, 1:] == 2)
    assert np.all(out.codes[1] == 0)


def test_simulation_shape_and_determinism():
    ms = random_matrices(5, 48, seed=0)
    cfg = GenConfig(12, hours=48, seed=7)
    a, b = simulate(cfg, ms), simulate(cfg, ms)
    assert a.codes.shape == (12, 48 * 60)
    assert np.array_equal(a.codes, b.codes)
    assert not np.array_equal(a.codes, simulate(GenConfig(12, hours=48, seed=8), ms).codes)


def test_generator_reproduces_corpus_marginal():
    corpus = simulate(GenConfig(60, hours=168, seed=1), random_matrices(60, 168, seed=1))
    sim = simulate(GenConfig(60, hours=168, seed=2), estimate_matrices(corpus))
    assert kl_divergence(marginal(corpus), marginal(sim)) <= 0.1


@pytest.mark.parametrize("kw", [dict(mix_prob=-0.1), dict(mix_prob=1.5), dict(n_subjects=0), dict(hours=0)])
def test_config_validation(kw):
    base = dict(n_subjects=2, hours=1)
    base.update(kw)
    with pytest.raises(GenConfigError):
        GenConfig(**base).validate()


def test_too_few_matrix_hours():
    with pytest.raises(DataValidationError, match="hour slots"):
        simulate(GenConfig(1, hours=5), random_matrices(1, 4))


def test_kl_examples():
    assert kl_divergence([0.25] * 4, [0.25] * 4) == pytest.approx(0.0, abs=1e-12)
    assert kl_divergence([0.5, 0.5], [0.75, 0.25]) == pytest.approx(0.14384, abs=1e-5)
    # zero entries are smoothed rather than producing infinities
    assert np.isfinite(kl_divergence([1, 0], [0, 1]))
    with pytest.raises(ValueError):
        kl_divergence([0.5, 0.6], [0.5, 0.5])


def test_kl_non_negative_and_asymmetric():
    rng = np.random.default_rng(4)
    for _ in range(200):
        p, q = rng.dirichlet(np.ones(4), 2)
        assert kl_divergence(p, q) >= 0
    assert kl_divergence([0.9, 0.1], [0.5, 0.5]) != pytest.approx(kl_divergence([0.5, 0.5], [0.9, 0.1]))


def test_outcomes_have_exact_correlation():
    ds = simulate(GenConfig(200, hours=24, seed=3), random_matrices(20, 24, seed=3))
    out = synth_outcomes(ds, seed=3)
    act = active_fraction(ds)
    assert np.corrcoef(act, out["flourishing"])[0, 1] == pytest.approx(0.15, abs=1e-9)
    assert np.corrcoef(act, out["cgpa"])[0, 1] == pytest.approx(-0.29, abs=1e-9)


def test_matrices_csv_round_trip(tmp_path):
    ms = random_matrices(2, 3, seed=0)
    write_matrices(ms, tmp_path / "m.csv")
    back = read_matrices(tmp_path / "m.csv")
    assert back.subject_ids == ms.subject_ids
    assert np.array_equal(back.matrices, ms.matrices)


def test_matrices_csv_missing_slot(tmp_path):
    ms = random_matrices(1, 2, seed=0)
    write_matrices(ms, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    (tmp_path / "m.csv").write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(DataValidationError, match="missing"):
        read_matrices(tmp_path / "m.csv")


def test_outcomes_csv_round_trip(tmp_path):
    write_outcomes(["a", "b"], {"cgpa": np.array([3.1, 2.9]), "flourishing": np.array([40.0, 50.5])},
                   tmp_path / "o.csv")
    assert read_outcomes(tmp_path / "o.csv") == {"a": (3.1, 40.0), "b": (2.9, 50.5)}
