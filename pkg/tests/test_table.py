import io
import struct
import zlib

import numpy as np
import pytest

from stable.density import StableParams
from stable.table import (DerivTable, analytic_log_pdf_derivative, build_table, closed_form_table,
                          deserialize_table, key_of, load_table, lookup_grad, read_table_header, save_table,
                          serialize_table, table_checksum)
from utils.exceptions import (ChecksumMismatch, DegenerateDensity, FormatError, InvalidParameter, NonSymmetric,
                              VersionMismatch)

CAUCHY = StableParams(alpha=1.0)


def _resealed(body: bytes) -> bytes:
    """Riattacca un CRC valido a un corpo modificato"""
    return body + struct.pack('<I', zlib.crc32(body) & 0xFFFFFFFF)


@pytest.fixture(scope='module')
def sas_table():
    return build_table(StableParams(alpha=1.5), 0.8, 20)


class TestBuild:
    def test_shape_and_delta(self, sas_table):
        assert sas_table.values.shape == (41,)
        assert sas_table.delta == pytest.approx(0.04)
        assert sas_table.prior_scale_c == 1.0

    def test_centre_key_is_exactly_zero(self, sas_table):
        assert sas_table.value_at(0) == 0.0
        assert build_table(CAUCHY, 0.8, 7).value_at(0) == 0.0

    def test_odd_symmetry_is_exact(self, sas_table):
        for k in range(1, sas_table.n_grid + 1):
            assert sas_table.value_at(-k) == -sas_table.value_at(k)

    def test_values_pull_towards_zero(self, sas_table):
        assert all(sas_table.value_at(k) < 0.0 for k in range(1, sas_table.n_grid + 1))

    def test_values_are_read_only(self, sas_table):
        with pytest.raises(ValueError):
            sas_table.values[0] = 1.0

    def test_centered_difference_converges_quadratically(self):
        theta = 0.4
        derivative = analytic_log_pdf_derivative(CAUCHY)
        exact = float(derivative(theta))
        point_errors = []
        errors = []
        for n_grid in (100, 200, 400):
            table = build_table(CAUCHY, 0.8, n_grid)
            key = int(round(theta / table.delta))
            point_errors.append(abs(table.value_at(key) - exact))
            grid = np.arange(-n_grid, n_grid + 1) * table.delta
            errors.append(np.max(np.abs(table.values - derivative(grid))))
        assert 3.5 <= errors[0] / errors[1] <= 4.5
        assert 3.5 <= errors[1] / errors[2] <= 4.5
        assert 3.5 <= point_errors[0] / point_errors[1] <= 4.5

    def test_gaussian_table_is_close_to_linear(self):
        params = StableParams(alpha=2.0, gamma=0.5)
        table = build_table(params, 0.8, 80)
        exact = analytic_log_pdf_derivative(params)(np.arange(-80, 81) * table.delta)
        assert np.max(np.abs(table.values - exact)) < 1e-3

    def test_rebuild_is_bit_identical(self, sas_table):
        again = build_table(StableParams(alpha=1.5), 0.8, 20)
        assert serialize_table(again) == serialize_table(sas_table)

    def test_location_shift_is_handled(self):
        table = build_table(StableParams(alpha=1.0, mu=0.2), 0.8, 8)
        # theta_k = 0.2 coincide con la moda
        assert table.value_at(2) == pytest.approx(0.0, abs=1e-12)

    def test_rejects_skewed_prior(self):
        with pytest.raises(NonSymmetric):
            build_table(StableParams(alpha=1.5, beta=0.3), 0.8, 10)

    @pytest.mark.parametrize('epsilon, n_grid', [(0.0, 10), (-1.0, 10), (0.8, 0)])
    def test_rejects_bad_grid(self, epsilon, n_grid):
        with pytest.raises(InvalidParameter):
            build_table(CAUCHY, epsilon, n_grid)

    def test_underflow_is_reported(self):
        with pytest.raises(DegenerateDensity):
            build_table(StableParams(alpha=2.0, gamma=0.01), 1000.0, 10)


class TestLookup:
    def test_key_of_clamps(self):
        table = closed_form_table(CAUCHY, 0.8, 4)
        assert key_of(table, 0.5) == 2
        assert key_of(table, -0.01) == -1
        assert key_of(table, 0.0) == 0
        assert key_of(table, 100.0) == 4
        assert key_of(table, -100.0) == -4

    def test_vectorized_keys_agree(self):
        table = closed_form_table(CAUCHY, 0.8, 4)
        thetas = np.array([-5.0, -0.3, -0.01, 0.0, 0.19, 0.2, 0.79, 3.0])
        assert table.keys(thetas).tolist() == [key_of(table, t) for t in thetas]
        assert table.saturated(thetas) == 2

    def test_scale_is_applied_at_query_time(self):
        table = closed_form_table(CAUCHY, 0.8, 4)
        scaled = table.with_scale(2.5)
        thetas = np.array([-0.5, 0.3, 0.7])
        assert np.array_equal(scaled.grad(thetas), 2.5 * table.grad(thetas))
        assert lookup_grad(scaled, 0.3) == 2.5 * table.value_at(1)
        assert np.array_equal(scaled.values, table.values)

    def test_closed_form_values(self):
        table = closed_form_table(StableParams(alpha=2.0), 0.8, 4)
        assert table.value_at(4) == pytest.approx(-0.4)
        assert table.value_at(-2) == pytest.approx(0.2)

    def test_no_closed_form_for_generic_alpha(self):
        with pytest.raises(InvalidParameter):
            analytic_log_pdf_derivative(StableParams(alpha=1.5))

    def test_table_validation(self):
        with pytest.raises(InvalidParameter):
            DerivTable(CAUCHY, 0.8, 4, np.zeros(5))
        with pytest.raises(InvalidParameter):
            DerivTable(CAUCHY, 0.8, 4, np.zeros(9), prior_scale_c=-1.0)


class TestPersistence:
    def test_round_trip(self, tmp_path, sas_table):
        path = tmp_path / 'tables' / 'sas.sdrt'
        checksum = save_table(sas_table.with_scale(0.3), path)
        loaded = load_table(path)
        assert loaded == sas_table.with_scale(0.3)
        assert checksum == table_checksum(loaded)
        assert len(checksum) == 8

    def test_header_only(self, tmp_path, sas_table):
        path = tmp_path / 'sas.sdrt'
        save_table(sas_table, path)
        header = read_table_header(path)
        assert header.version == 1
        assert (header.alpha, header.gamma, header.mu) == (1.5, 1.0, 0.0)
        assert header.n_grid == 20
        assert header.delta == pytest.approx(0.04)
        assert read_table_header(io.BytesIO(path.read_bytes())) == header

    def test_corrupted_value_fails_checksum(self, sas_table):
        blob = bytearray(serialize_table(sas_table))
        blob[60] ^= 0x01
        with pytest.raises(ChecksumMismatch):
            deserialize_table(bytes(blob))

    def test_truncated_file(self, sas_table):
        blob = serialize_table(sas_table)
        with pytest.raises(ChecksumMismatch):
            deserialize_table(blob[:-9])
        with pytest.raises(FormatError):
            deserialize_table(blob[:10])

    @pytest.mark.parametrize('index', [0, 4, 40])
    def test_flipped_header_byte_fails_checksum(self, sas_table, index):
        blob = bytearray(serialize_table(sas_table))
        blob[index] ^= 0x01
        with pytest.raises(ChecksumMismatch):
            deserialize_table(bytes(blob))

    def test_bad_magic(self, sas_table):
        blob = _resealed(b'XXXX' + serialize_table(sas_table)[4:-4])
        with pytest.raises(FormatError) as info:
            deserialize_table(blob)
        assert not isinstance(info.value, ChecksumMismatch)

    def test_unknown_version(self, sas_table):
        blob = bytearray(serialize_table(sas_table)[:-4])
        blob[4:8] = struct.pack('<I', 99)
        with pytest.raises(VersionMismatch):
            deserialize_table(_resealed(bytes(blob)))

    def test_sealed_but_truncated_body(self, sas_table):
        with pytest.raises(FormatError) as info:
            deserialize_table(_resealed(serialize_table(sas_table)[:-12]))
        assert not isinstance(info.value, ChecksumMismatch)

    def test_format_errors_share_a_base(self):
        assert issubclass(ChecksumMismatch, FormatError)
        assert issubclass(VersionMismatch, FormatError)
