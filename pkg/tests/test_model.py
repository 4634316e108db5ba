import numpy as np
import pytest

from netident.basis import LibrarySpec, build_library
from netident.dynamics import default_params, initial_state, true_coefficients, vector_field
from netident.errors import EvaluationError, ParameterError
from netident.graph import Graph, generate
from netident.model import ModelSpec, equation_strings, model_rhs
from netident.support import SupportMask


def simple_model(w_self=None, w_pair=None, state_dim=1):
    lib = build_library(LibrarySpec(), state_dim=state_dim)
    ws = np.zeros((lib.n_self, state_dim)) if w_self is None else np.asarray(w_self, dtype=float)
    wp = np.zeros((lib.n_pair, state_dim)) if w_pair is None else np.asarray(w_pair, dtype=float)
    mask = SupportMask(
        self_mask=np.ones_like(ws, dtype=np.uint8), pair_mask=np.ones_like(wp, dtype=np.uint8)
    )
    return ModelSpec(lib=lib, mask=mask, w_self=ws, w_pair=wp)


class TestModelSpec:
    def test_masked_entries_forced_to_zero(self):
        lib = build_library(LibrarySpec(), state_dim=1)
        mask = SupportMask(
            self_mask=np.array([[1], [0], [0], [0]]), pair_mask=np.zeros((lib.n_pair, 1), dtype=np.uint8)
        )
        w = np.ones((lib.n_self, 1))
        model = ModelSpec(lib=lib, mask=mask, w_self=w, w_pair=np.ones((lib.n_pair, 1)))
        assert model.w_self[0, 0] == 1.0
        assert np.all(model.w_self[1:] == 0.0)
        assert np.all(model.w_pair == 0.0)

    def test_active_count_independent_of_graph(self):
        model = simple_model()
        assert model.n_active == model.mask.n_active

    def test_json_round_trip(self, tmp_path):
        lib = build_library(LibrarySpec(time_periods=(2.0,)), state_dim=2)
        rng = np.random.default_rng(0)
        ws = rng.standard_normal((lib.n_self, 2))
        wp = rng.standard_normal((lib.n_pair, 2))
        mask = SupportMask(
            self_mask=(np.abs(ws) > 0.5).astype(np.uint8),
            pair_mask=(np.abs(wp) > 0.5).astype(np.uint8),
        )
        model = ModelSpec(lib=lib, mask=mask, w_self=ws, w_pair=wp)
        path = tmp_path / "model.json"
        model.save(path)
        back = ModelSpec.load(path)
        assert np.array_equal(back.w_self, model.w_self)
        assert np.array_equal(back.w_pair, model.w_pair)
        assert back.lib.self_names == model.lib.self_names

    def test_nonfinite_rejected(self):
        lib = build_library(LibrarySpec(), state_dim=1)
        mask = SupportMask(self_mask=np.ones((lib.n_self, 1), dtype=np.uint8), pair_mask=np.zeros((lib.n_pair, 1), dtype=np.uint8))
        w = np.zeros((lib.n_self, 1))
        w[0] = np.inf
        with pytest.raises(ParameterError):
            ModelSpec(lib=lib, mask=mask, w_self=w, w_pair=np.zeros((lib.n_pair, 1)))


class TestModelRhs:
    def test_zero_model_zero_field(self):
        g = generate("ba", n=10, seed=0, m=2)
        model = simple_model()
        out = model_rhs(model, g, np.random.default_rng(0).standard_normal((10, 1)), 0.0)
        assert np.all(out == 0.0)

    def test_linear_decay_field(self):
        g = Graph.from_edges(1, [])
        lib = build_library(LibrarySpec(), state_dim=1)
        ws = np.zeros((lib.n_self, 1))
        ws[lib.self_names.index("x")] = -1.0
        model = simple_model(w_self=ws)
        out = model_rhs(model, g, np.array([[2.0]]), 0.0)
        assert out[0, 0] == pytest.approx(-2.0)

    def test_matches_dynamics_oracle(self):
        # the dynamics module is the oracle for the library-projected truth
        g = generate("ba", n=50, seed=1, m=3)
        params = default_params("kuramoto")
        lib = build_library(LibrarySpec(), state_dim=1)
        model = true_coefficients(params, lib)
        rng = np.random.default_rng(2)
        x = rng.uniform(-np.pi, np.pi, size=(50, 1))
        assert np.max(np.abs(model_rhs(model, g, x, 0.0) - vector_field(params, g, x, 0.0))) < 1e-12

    def test_nonfinite_raises_with_node(self):
        g = Graph.from_edges(2, [(0, 1)])
        lib = build_library(LibrarySpec(), state_dim=1)
        ws = np.zeros((lib.n_self, 1))
        ws[lib.self_names.index("x^3")] = 1e300
        model = simple_model(w_self=ws)
        with pytest.raises(EvaluationError):
            model_rhs(model, g, np.array([[1e200], [0.0]]), 0.0)

    def test_shape_check(self):
        g = Graph.from_edges(2, [(0, 1)])
        model = simple_model()
        with pytest.raises(ParameterError):
            model_rhs(model, g, np.zeros((3, 1)), 0.0)


class TestEquationStrings:
    def test_format(self):
        lib = build_library(LibrarySpec(), state_dim=1)
        ws = np.zeros((lib.n_self, 1))
        ws[lib.self_names.index("1")] = -0.1334
        wp = np.zeros((lib.n_pair, 1))
        wp[lib.pair_names.index("xj-xi")] = 0.4847
        model = simple_model(w_self=ws, w_pair=wp)
        (line,) = equation_strings(model)
        assert line.startswith("dx_i/dt = -0.1334")
        assert "sum_j [0.4847*xj-xi]" in line

    def test_zero_model(self):
        (line,) = equation_strings(simple_model())
        assert line == "dx_i/dt = 0"

    def test_multidim_names(self):
        model = simple_model(state_dim=2)
        lines = equation_strings(model)
        assert lines[0].startswith("dx1_i/dt")
        assert lines[1].startswith("dx2_i/dt")
