"""
Tests for the versioned JSON documents and tabular writers.
"""
import json

import numpy as np
import pandas as pd
import pytest

from core.exceptions import ArtifactIOError, DataFormatError
from infrastructure.documents import (
    ADDITIVE_VERSION,
    AdditiveDocument,
    CovarianceSidecar,
    ModalDocument,
    StateSpaceDocument,
    read_covariance,
    read_document,
    write_covariance,
    write_json,
    write_table,
)
from services.modal_model import eval_modal, map_f
from services.realization import eval_ss, realize
from services.riv import CovarianceEstimate, CovarianceFormula


class TestRoundTrips:

    def test_additive(self, general_rho, tmp_path):
        params = map_f(general_rho)
        path = write_json(tmp_path / "additive.json", AdditiveDocument.from_params(params))
        restored = read_document(path, expected=[ADDITIVE_VERSION]).to_params()
        assert restored.structure == params.structure
        np.testing.assert_array_equal(restored.to_vector(), params.to_vector())

    @pytest.mark.parametrize("fixture", ["general_rho", "proportional_rho"])
    def test_modal(self, fixture, grid, tmp_path, request):
        rho = request.getfixturevalue(fixture)
        path = write_json(tmp_path / "modal.json", ModalDocument.from_modal(rho))
        restored = read_document(path).to_modal()
        assert restored.damping_model == rho.damping_model
        assert (restored.n_rbm, restored.n_flex) == (rho.n_rbm, rho.n_flex)
        np.testing.assert_allclose(eval_modal(restored, grid.s), eval_modal(rho, grid.s), rtol=1e-12)

    def test_state_space(self, proportional_rho, tmp_path):
        ss = realize(proportional_rho)
        path = write_json(tmp_path / "statespace.json", StateSpaceDocument.from_state_space(ss))
        restored = read_document(path).to_state_space()
        np.testing.assert_array_equal(restored.A, ss.A)
        np.testing.assert_allclose(eval_ss(restored, 2j), eval_ss(ss, 2j))

    def test_deterministic_output(self, general_rho, tmp_path):
        document = ModalDocument.from_modal(general_rho)
        first = write_json(tmp_path / "a.json", document).read_text()
        second = write_json(tmp_path / "b.json", document).read_text()
        assert first == second
        assert first.endswith("\n")


class TestReadDocument:

    def test_missing_file(self, tmp_path):
        with pytest.raises(ArtifactIOError):
            read_document(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(DataFormatError):
            read_document(path)

    def test_unknown_version(self, tmp_path):
        path = write_json(tmp_path / "doc.json", {"version": "modal-v9"})
        with pytest.raises(ArtifactIOError):
            read_document(path)

    def test_unexpected_version(self, general_rho, tmp_path):
        path = write_json(tmp_path / "doc.json", ModalDocument.from_modal(general_rho))
        with pytest.raises(ArtifactIOError):
            read_document(path, expected=[ADDITIVE_VERSION])

    def test_schema_violation(self, tmp_path):
        path = write_json(tmp_path / "doc.json", {"version": "additive-v1", "n_outputs": 1})
        with pytest.raises(DataFormatError):
            read_document(path)

    def test_mode_count_mismatch(self, general_rho, tmp_path):
        payload = ModalDocument.from_modal(general_rho).model_dump(mode="json")
        payload["n_flex"] = 3
        path = write_json(tmp_path / "doc.json", payload)
        with pytest.raises(DataFormatError):
            read_document(path)

    def test_general_mode_needs_eigenvalue(self, general_rho, tmp_path):
        payload = ModalDocument.from_modal(general_rho).model_dump(mode="json")
        payload["modes"][0]["lambda_re"] = None
        path = write_json(tmp_path / "doc.json", payload)
        with pytest.raises(DataFormatError):
            read_document(path)


class TestCovarianceFiles:

    def test_round_trip(self, tmp_path):
        matrix = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.0], [0.0, 0.0, 3.0]])
        estimate = CovarianceEstimate(matrix, np.linalg.inv(matrix), ["a1", "a2", "B0[1,1]"], CovarianceFormula.SANDWICH)
        path = write_covariance(tmp_path, estimate)
        frame = pd.read_csv(path)
        assert list(frame.columns) == ["row", "col", "value"]
        assert len(frame) == 4
        assert np.all(frame["row"] <= frame["col"])
        np.testing.assert_array_equal(read_covariance(tmp_path), matrix)

    def test_sidecar(self, tmp_path):
        estimate = CovarianceEstimate.identity(["x", "y"])
        write_covariance(tmp_path, estimate)
        sidecar = read_document(tmp_path / "covariance.json")
        assert isinstance(sidecar, CovarianceSidecar)
        assert sidecar.relative_only
        assert [p.label for p in sidecar.parameters] == ["x", "y"]
        assert [p.index for p in sidecar.parameters] == [0, 1]


class TestWriteTable:

    def test_column_order_and_nan(self, tmp_path):
        records = [{"iter": 0, "cost": 1.5, "change": float("nan")}, {"cost": 0.5, "iter": 1, "change": 0.1}]
        path = write_table(tmp_path / "trace.csv", records, ["iter", "cost", "change"])
        lines = path.read_text().splitlines()
        assert lines[0] == "iter,cost,change"
        assert lines[1] == "0,1.5,nan"
        assert lines[2] == "1,0.5,0.1"


class TestWriteJson:

    def test_rejects_nan(self, tmp_path):
        with pytest.raises(ArtifactIOError):
            write_json(tmp_path / "doc.json", {"value": float("nan")})

    def test_plain_dict(self, tmp_path):
        path = write_json(tmp_path / "nested" / "doc.json", {"b": 1, "a": [1.5]})
        assert json.loads(path.read_text()) == {"b": 1, "a": [1.5]}
