import json

import numpy as np
import pytest

from errors import HolderLabError
from models import CoefficientArray
from randomness import CoefficientLattice
from storage import (
    MAGIC,
    read_path_binary,
    write_coefficients_csv,
    write_csv,
    write_json,
    write_path_binary,
    write_path_csv,
    write_table_csv,
)
from synthesis import synth_fh
from wavelets import WaveletSpec, cascade, wavelet_table

DB4 = WaveletSpec(family="daubechies", order=4)


@pytest.fixture
def path():
    return synth_fh(CoefficientLattice(42), DB4, 0.5, 6, (0.25, 0.75), 10)


def test_write_csv_formats_values(tmp_path):
    target = write_csv(tmp_path / "out" / "rows.csv", ["a", "b", "c"], [[1, 0.1, True], [2, 1e-20, False]])
    assert target.read_text() == "a,b,c\n1,0.1,true\n2,1e-20,false\n"
    assert [p.name for p in target.parent.iterdir()] == ["rows.csv"]


def test_write_json_adds_schema_version(tmp_path):
    target = write_json(tmp_path / "report.json", {"b": np.float64(1.5), "a": np.arange(3)})
    document = json.loads(target.read_text())
    assert document == {"schema_version": 1, "a": [0, 1, 2], "b": 1.5}
    assert target.read_text().index('"a"') < target.read_text().index('"b"')


def test_binary_path_file(tmp_path, path):
    target = write_path_binary(tmp_path / "path.bin", path)
    data = target.read_bytes()
    assert data[:4] == MAGIC
    loaded = read_path_binary(target)
    assert loaded.J_grid == 10 and loaded.i0 == 256 and loaded.seed == 42
    assert loaded.fingerprint == path.provenance.fingerprint()
    assert np.array_equal(loaded.values, path.values)
    assert loaded.window == path.window


def test_binary_output_is_reproducible(tmp_path, path):
    again = synth_fh(CoefficientLattice(42), DB4, 0.5, 6, (0.25, 0.75), 10)
    a = write_path_binary(tmp_path / "a.bin", path).read_bytes()
    b = write_path_binary(tmp_path / "b.bin", again).read_bytes()
    assert a == b


def test_read_rejects_foreign_files(tmp_path):
    short = tmp_path / "short.bin"
    short.write_bytes(b"HL")
    with pytest.raises(HolderLabError):
        read_path_binary(short)
    foreign = tmp_path / "foreign.bin"
    foreign.write_bytes(b"XXXX" + bytes(60))
    with pytest.raises(HolderLabError):
        read_path_binary(foreign)


def test_path_csv(tmp_path, path):
    lines = write_path_csv(tmp_path / "path.csv", path).read_text().splitlines()
    assert lines[0] == "t,value"
    assert len(lines) == path.n + 1
    assert lines[1].startswith("0.25,")


def test_coefficients_csv(tmp_path):
    coeffs = CoefficientArray()
    coeffs.set_row(2, -1, np.array([0.5, -0.25, 1.0]), np.array([True, False, True]))
    lines = write_coefficients_csv(tmp_path / "c.csv", coeffs).read_text().splitlines()
    assert lines == ["j,k,c", "2,-1,0.5", "2,1,1.0"]


def test_table_csv(tmp_path):
    tent = write_table_csv(tmp_path / "fs.csv", wavelet_table(WaveletSpec(family="faber-schauder"), 2))
    assert tent.read_text().splitlines() == ["grid_point,value", "0.0,0.0", "0.25,0.25", "0.5,0.5", "0.75,0.25", "1.0,0.0"]
    db = write_table_csv(tmp_path / "db4.csv", cascade(DB4, 4)).read_text().splitlines()
    assert db[0] == "grid_point,value"
    assert len(db) == 7 * 16 + 2
    assert all(len(row.split(",")) == 2 for row in db)
