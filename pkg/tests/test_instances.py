import numpy as np
import pytest

from errors import InvalidArgumentError, ParseError
from iht import IhtConfig, is_fixpoint
from instances import (gen_hard_instance, gen_planted_quadratic, gen_recovery_instance, load_dataset, load_svmlight,
                       save_svmlight)


@pytest.mark.parametrize('kappa, s, s_prime', [(4, 2, 19), (10, 2, 120), (20, 2, 480)])
def test_hard_instance_fixpoint_and_gap(kappa, s, s_prime):
    inst = gen_hard_instance(kappa, s, s_prime)
    obj = inst.objective()
    assert inst.n == s * (kappa ** 2 + kappa + 1)
    assert is_fixpoint(obj, inst.x_bad, IhtConfig(s_prime, 1.0 / kappa))
    gap = obj.value(inst.x_bad) - obj.value(inst.x_star)
    assert gap >= 0.1 * s * kappa ** 2
    assert gap == pytest.approx(inst.gap())


def test_hard_instance_blocks():
    inst = gen_hard_instance(20, 2, 480)
    I1, I2, I3 = inst.blocks
    assert (len(I1), len(I2), len(I3)) == (2, 40, 800)
    assert inst.n == 842
    assert np.count_nonzero(inst.x_bad) == 480
    assert all(i in I3 for i in np.flatnonzero(inst.x_bad))


def test_hard_instance_rejects_bad_parameters():
    with pytest.raises(InvalidArgumentError):
        gen_hard_instance(4.5, 2, 10)
    with pytest.raises(InvalidArgumentError):
        gen_hard_instance(4, 2, 20)
    with pytest.raises(InvalidArgumentError):
        gen_hard_instance(4, 2, 0)
    with pytest.raises(InvalidArgumentError):
        gen_hard_instance(4, 2, 10, delta=0.3)


def test_recovery_instance_is_reproducible():
    a = gen_recovery_instance(20, 50, 5, seed=3)
    b = gen_recovery_instance(20, 50, 5, seed=3)
    np.testing.assert_array_equal(a.A.toarray(), b.A.toarray())
    np.testing.assert_array_equal(a.x_true, b.x_true)
    assert np.count_nonzero(a.x_true) == 5
    np.testing.assert_allclose(a.b, a.A @ a.x_true)
    assert not np.array_equal(gen_recovery_instance(20, 50, 5, seed=4).x_true, a.x_true)


def test_planted_quadratic():
    obj, x_star, S_star = gen_planted_quadratic(30, 3, 4.0, seed=0)
    assert obj.value(x_star) == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_array_equal(np.flatnonzero(x_star), S_star)
    assert obj.beta_estimate == pytest.approx(4.0)
    assert obj.alpha_estimate == pytest.approx(1.0)
    assert obj.kappa == pytest.approx(4.0)


def test_svmlight_roundtrip(tmp_path, rng):
    A = rng.standard_normal((4, 5))
    A[A < 0.3] = 0.0
    b = np.array([1.0, -1.0, 1.0, -1.0])
    path = str(tmp_path / 'data.svm')
    save_svmlight(path, A, b)
    A2, b2 = load_svmlight(path, n_features=5)
    np.testing.assert_array_equal(A2.toarray(), A)
    np.testing.assert_array_equal(b2, b)


def test_svmlight_comments_and_blank_lines(tmp_path):
    path = tmp_path / 'data.svm'
    path.write_text('# header\n\n1 1:0.5 3:2 # note\n-1 2:1\n')
    A, b = load_svmlight(str(path))
    np.testing.assert_array_equal(A.toarray(), [[0.5, 0.0, 2.0], [0.0, 1.0, 0.0]])
    np.testing.assert_array_equal(b, [1.0, -1.0])


def test_svmlight_empty_file(tmp_path):
    path = tmp_path / 'empty.svm'
    path.write_text('')
    A, b = load_svmlight(str(path))
    assert A.shape == (0, 0)
    assert b.size == 0


@pytest.mark.parametrize('text, line, column', [
    ('1 1:0.5\nx 1:1\n', 2, 1),
    ('1 1:0.5 2-1\n', 1, 9),
    ('1 2:0.5 1:1\n', 1, 9),
    ('1 0:1\n', 1, 3),
    ('1 1:abc\n', 1, 3),
])
def test_svmlight_errors_carry_position(tmp_path, text, line, column):
    path = tmp_path / 'bad.svm'
    path.write_text(text)
    with pytest.raises(ParseError) as info:
        load_svmlight(str(path))
    assert (info.value.line, info.value.column) == (line, column)


def test_load_dataset_maps_labels(tmp_path):
    path = tmp_path / 'cls.svm'
    path.write_text('1 1:1 2:3\n-1 1:2 2:1\n1 1:4 2:2\n')
    data = load_dataset(str(path), 'logistic')
    assert data.task == 'classification'
    np.testing.assert_array_equal(data.b, [1.0, 0.0, 1.0])
    dense = data.A.toarray()
    np.testing.assert_allclose(np.linalg.norm(dense, axis=0), 1.0)
    assert load_dataset(str(path), 'ls').task == 'regression'


def test_load_dataset_rejects_multiclass_labels(tmp_path):
    path = tmp_path / 'multi.svm'
    path.write_text('1 1:1\n2 1:2\n3 1:3\n')
    with pytest.raises(InvalidArgumentError):
        load_dataset(str(path), 'logistic')
