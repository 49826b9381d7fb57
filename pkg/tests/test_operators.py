import numpy as np
import pytest

from errors import DomainError, SchemaError
from operators import (
    FieldSamples, as_sparse_operator, commutator_norm, dot, first_derivative,
    higher_derivative, nonlocal_gradient, stencil_edge_weights, unit_vector,
)
from poly_basis import MultiIndex
from stencil import build_stencil_hierarchy, build_stencil_set
from taylor import RandomPolynomial


def test_first_derivative_of_linear_field_on_unstructured_cloud(jittered_square):
    stencils = build_stencil_set(jittered_square, 1)
    u = 2.0 * jittered_square.points[:, 0] - 0.5 * jittered_square.points[:, 1]
    np.testing.assert_allclose(first_derivative(stencils, u, 0).values, 2.0, atol=1e-10)
    np.testing.assert_allclose(first_derivative(stencils, u, 1).values, -0.5, atol=1e-10)


def test_field_may_be_given_on_train_vertices_only(square_mesh):
    stencils = build_stencil_set(square_mesh, 2)
    u = square_mesh.points[:, 0] ** 2
    full = first_derivative(stencils, FieldSamples(u), 0)
    train_only = first_derivative(stencils, u[square_mesh.train_ids], 0)
    np.testing.assert_array_equal(full.values, train_only.values)
    assert np.isnan(full.full(square_mesh.n)[square_mesh.test_ids]).all()
    with pytest.raises(SchemaError):
        first_derivative(stencils, u[:5], 0)


def test_second_derivatives_of_quadratic(square_mesh):
    stencils = build_stencil_set(square_mesh, 2)
    x, y = square_mesh.points[:, 0], square_mesh.points[:, 1]
    u = x ** 2 + 3.0 * x * y
    d00 = higher_derivative(stencils, u, MultiIndex((0, 0), 2))
    d01 = higher_derivative(stencils, u, MultiIndex((0, 1), 2))
    assert d00.nominal_accuracy == 1
    np.testing.assert_allclose(d00.values, 2.0, atol=1e-8)
    np.testing.assert_allclose(d01.values, 3.0, atol=1e-8)


def test_per_order_hierarchy_keeps_accuracy(line_mesh):
    poly = RandomPolynomial(1, 3, seed=5)
    u = poly(line_mesh.points)
    hierarchy = build_stencil_hierarchy(line_mesh, 2, 2)
    result = higher_derivative(hierarchy[2], u, MultiIndex((0, 0), 1), hierarchy=hierarchy)
    assert result.nominal_accuracy == 2
    exact = poly.derivative((2,), line_mesh.train_points())
    np.testing.assert_allclose(result.values, exact, atol=1e-7)


def test_sparse_operator_matches_composed_application(jittered_square):
    stencils = build_stencil_set(jittered_square, 2)
    u = np.sin(jittered_square.points[:, 0]) * np.cos(2 * jittered_square.points[:, 1])
    index = MultiIndex((1, 0, 0), 2)
    op = as_sparse_operator(stencils, index)
    direct = higher_derivative(stencils, u, index).values
    np.testing.assert_allclose(op.apply(u[jittered_square.train_ids]), direct,
                               rtol=1e-9, atol=1e-9)
    rows, cols, vals = op.triplets()
    assert len(rows) == op.matrix.nnz
    assert np.all(np.diff(rows) >= 0)


def test_first_derivative_matrix_rows_sum_to_zero(square_mesh):
    op = as_sparse_operator(build_stencil_set(square_mesh, 2), MultiIndex((1,), 2))
    np.testing.assert_allclose(np.asarray(op.matrix.sum(axis=1)).ravel(), 0.0, atol=1e-9)


def test_mixed_derivatives_commute_on_polynomials(jittered_square):
    stencils = build_stencil_set(jittered_square, 3)
    x, y = jittered_square.points[:, 0], jittered_square.points[:, 1]
    u = 1.0 + x * y + 0.5 * x ** 2 - y ** 2
    assert commutator_norm(stencils, u, 0, 1) < 1e-8


def test_nonlocal_gradient_and_dot():
    u = np.array([0.0, 1.0, 3.0])
    w = np.array([[0.0, 4.0, 1.0], [1.0, 0.0, 1.0], [9.0, 1.0, 0.0]])
    grad = nonlocal_gradient(u, w)
    np.testing.assert_allclose(grad[0], [0.0, 2.0, 3.0])
    assert np.all(np.diag(grad) == 0)
    ones = np.ones((3, 3))
    assert dot(grad, ones, x=0) == pytest.approx(2.5)
    np.testing.assert_allclose(dot(grad, ones), [2.5, 0.5, -5.5])


def test_negative_edge_weight_is_a_domain_error():
    w = np.array([[0.0, -1.0], [1.0, 0.0]])
    with pytest.raises(DomainError):
        nonlocal_gradient([0.0, 1.0], w)


def test_stencil_edge_weights_reproduce_first_derivative(line_mesh):
    stencils = build_stencil_set(line_mesh, 1)
    pts = line_mesh.train_points()
    u = np.exp(line_mesh.points[:, 0])
    w = stencil_edge_weights(stencils, 0)
    assert np.all(w >= 0)
    graph = dot(nonlocal_gradient(u[line_mesh.train_ids], w), unit_vector(pts, w, 0))
    np.testing.assert_allclose(graph, first_derivative(stencils, u, 0).values, rtol=1e-12)


def test_signed_edge_weights_reproduce_higher_order_derivatives(line_mesh):
    stencils = build_stencil_set(line_mesh, 3)
    pts = line_mesh.train_points()
    u = np.exp(line_mesh.points[:, 0])
    w = stencil_edge_weights(stencils, 0)
    assert w.min() < 0
    with pytest.raises(DomainError):
        nonlocal_gradient(u[line_mesh.train_ids], w)
    grad = nonlocal_gradient(u[line_mesh.train_ids], w, signed=True)
    graph = dot(grad, unit_vector(pts, w, 0, signed=True))
    assert graph.dtype == float
    np.testing.assert_allclose(graph, first_derivative(stencils, u, 0).values, rtol=1e-10)
