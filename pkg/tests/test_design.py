import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose

from hetsar import ModelSpec, SmoothConfig, assemble_design


@pytest.fixture()
def frame():
    rng = np.random.default_rng(8)
    return pd.DataFrame({"y": rng.normal(size=60),
                         "a": rng.normal(size=60),
                         "b": rng.normal(size=60),
                         "x": rng.uniform(size=60)})


class TestModelSpec:
    def test_two_linear_terms_no_smooth(self, frame):
        spec = ModelSpec(response="y", mean_linear=("a", "b"))
        design = assemble_design(spec, frame)
        assert design.X_mean.shape == (60, 3)
        assert design.mean.columns == ["intercept", "a", "b"]
        assert design.X_scale.shape == (60, 1)

    def test_smooth_block_bookkeeping(self, frame):
        spec = ModelSpec(response="y", mean_linear=("a",),
                         mean_smooth=(SmoothConfig("x", num_basis=20),))
        design = assemble_design(spec, frame)
        assert design.X_mean.shape == (60, 22)
        assert len(design.mean.blocks) == 1
        blk = design.mean.blocks[0]
        assert blk.cols == slice(2, 22)
        assert blk.matrix.shape == (20, 20)
        # centered columns have zero means
        assert_allclose(design.X_mean[:, 2:].mean(axis=0), 0.0, atol=1e-10)

    def test_duplicate_linear_and_smooth_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            ModelSpec(response="y", mean_linear=("x",),
                      mean_smooth=(SmoothConfig("x"),))

    def test_response_among_regressors_rejected(self):
        with pytest.raises(ValueError, match="response"):
            ModelSpec(response="y", mean_linear=("y",))

    def test_round_trip_document(self):
        spec = ModelSpec(response="y", mean_linear=("a",),
                         mean_smooth=({"var": "x", "num_basis": 12},),
                         scale_linear=("b",),
                         scale_smooth=(SmoothConfig("x", degree=2),))
        doc = spec.to_dict()
        again = ModelSpec.from_dict(doc)
        assert again == spec
        assert doc["mean"]["smooth"][0]["num_basis"] == 12

    def test_unknown_smooth_field_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            ModelSpec(response="y", mean_smooth=({"var": "x", "bss": 1},))


class TestAssembleErrors:
    def test_missing_column(self, frame):
        spec = ModelSpec(response="y", mean_linear=("nope",))
        with pytest.raises(KeyError, match="nope"):
            assemble_design(spec, frame)

    def test_non_finite_values(self, frame):
        frame = frame.copy()
        frame.loc[3, "a"] = np.inf
        spec = ModelSpec(response="y", mean_linear=("a",))
        with pytest.raises(ValueError, match="non-finite"):
            assemble_design(spec, frame)

    def test_non_numeric_column(self, frame):
        frame = frame.copy()
        frame["a"] = "text"
        spec = ModelSpec(response="y", mean_linear=("a",))
        with pytest.raises(ValueError, match="numeric"):
            assemble_design(spec, frame)

    def test_wide_design_warns_not_errors(self, frame):
        spec = ModelSpec(response="y",
                         mean_smooth=(SmoothConfig("x", num_basis=70),))
        with pytest.warns(UserWarning, match="penalty"):
            design = assemble_design(spec, frame)
        assert design.X_mean.shape == (60, 71)

    def test_mapping_input_accepted(self):
        data = {"y": np.arange(10.0), "a": np.arange(10.0) ** 2}
        spec = ModelSpec(response="y", mean_linear=("a",))
        design = assemble_design(spec, data)
        assert design.X_mean.shape == (10, 2)


class TestPenaltyAssembly:
    def test_penalty_zero_outside_blocks(self, frame):
        spec = ModelSpec(response="y", mean_linear=("a",),
                         mean_smooth=(SmoothConfig("x", num_basis=8),))
        design = assemble_design(spec, frame)
        design.mean.blocks[0].psi = 3.0
        P = design.mean.penalty()
        assert_allclose(P[:2, :], 0.0)
        assert_allclose(P[2:, 2:], 3.0 * design.mean.blocks[0].matrix)

    def test_completion_restores_identifiability(self, frame):
        spec = ModelSpec(response="y",
                         mean_smooth=(SmoothConfig("x", num_basis=10),))
        design = assemble_design(spec, frame)
        X = design.X_mean
        C0 = X.T @ X + design.mean.penalty()
        # the centered block plus intercept leaves the block's coefficient
        # sum unidentified: the normal matrix is singular without completion
        assert np.linalg.eigvalsh(C0).min() < 1e-8
        C1 = C0 + design.mean.completion()
        assert np.linalg.eigvalsh(C1).min() > 0

    def test_penalty_quad_and_grad_consistent(self, frame):
        spec = ModelSpec(response="y",
                         mean_smooth=(SmoothConfig("x", num_basis=6),))
        design = assemble_design(spec, frame)
        design.mean.blocks[0].psi = 1.7
        coef = np.random.default_rng(0).normal(size=design.mean.p)
        P = design.mean.penalty()
        assert_allclose(design.mean.penalty_quad(coef), coef @ P @ coef)
        assert_allclose(design.mean.penalty_grad(coef), P @ coef)
