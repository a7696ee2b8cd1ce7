"""
Unit tests for wavepackets, the FBI transform and packet parametrices.
"""

import numpy as np
import pytest

from sclens.core.exceptions import (
    ConfigurationError,
    DimensionTooLarge,
    NotExited,
    PhaseGridTooCoarse,
    Unresolvable,
)
from sclens.models import Grid, GridField, RegionB, Wavepacket
from sclens.services import fourier
from sclens.services.phase_space import (
    PhaseGrid,
    annulus_profile,
    decay_outside_region,
    fbi_adjoint,
    fbi_transform,
    flat_h1_norm,
    long_time_envelope,
    packet_centroid,
    packet_second_moment,
    short_time_parametrix,
    synthesize_wavepacket,
    truncate_to_region,
    wrapped_offset,
)


@pytest.fixture
def packet_grid():
    """1D box [-8, 8) with 256 points, fine enough for h = 0.1 packets."""
    return Grid(dim=1, length=16.0, points=256)


@pytest.fixture
def packet(packet_grid):
    return synthesize_wavepacket(Wavepacket(x0=[0.5], xi0=[0.5], h=0.1), packet_grid)


class TestWavepackets:
    """Test coherent-state synthesis."""

    @pytest.mark.unit
    def test_unit_norm_and_moments(self, packet):
        """|psi|^2 is a Gaussian of variance h/2 centred at x0."""
        assert packet.l2_norm() == pytest.approx(1.0, rel=1e-12)
        np.testing.assert_allclose(packet_centroid(packet), [0.5], atol=1e-12)
        assert packet_second_moment(packet, [0.5]) == pytest.approx(0.05, rel=1e-9)

    @pytest.mark.unit
    def test_momentum(self, packet, packet_grid):
        """The spectrum peaks at xi0 / h."""
        spectrum = np.abs(fourier.fft(packet.values))
        assert packet_grid.wave_axis[np.argmax(spectrum)] == pytest.approx(5.0, abs=packet_grid.wave_axis[1])

    @pytest.mark.unit
    def test_unresolved_packet(self, line_grid):
        with pytest.raises(Unresolvable):
            synthesize_wavepacket(Wavepacket(x0=[0.0], xi0=[0.0], h=0.01), line_grid)

    @pytest.mark.unit
    def test_invalid_scale(self):
        with pytest.raises(ConfigurationError):
            Wavepacket(x0=[0.0], xi0=[0.0], h=1.5)

    @pytest.mark.unit
    def test_wrapped_offset(self):
        grid = Grid(dim=1, length=10.0, points=10)
        offset = wrapped_offset(grid, np.array([4.0]))[0]
        # the sample at -5 is one step past +4 through the periodic face
        assert offset[0] == pytest.approx(1.0)
        assert np.all(np.abs(offset) <= 5.0)


class TestFBITransform:
    """Test T_h and its adjoint on a phase grid."""

    @pytest.mark.unit
    def test_isometry(self, packet):
        """||T_h f||_{L^2(dx dxi)} = ||f||_{L^2}."""
        table = fbi_transform(packet, 0.1)
        assert table.norm_squared() == pytest.approx(1.0, rel=1e-6)

    @pytest.mark.unit
    def test_adjoint_inverts(self, packet):
        """T_h* T_h = I on resolved data."""
        table = fbi_transform(packet, 0.1)
        recovered = fbi_adjoint(table)
        assert (recovered - packet).l2_norm() <= 1e-6

    @pytest.mark.unit
    def test_threads_do_not_change_values(self, packet):
        single = fbi_transform(packet, 0.1)
        threaded = fbi_transform(packet, 0.1, threads=3)
        np.testing.assert_array_equal(single.values, threaded.values)

    @pytest.mark.unit
    def test_concentrates_at_packet_frame(self, packet):
        """|T_h psi| peaks at (x0, xi0)."""
        table = fbi_transform(packet, 0.1)
        ix, ixi = np.unravel_index(np.argmax(np.abs(table.values)), table.values.shape)
        assert table.x_axis[ix] == pytest.approx(0.5, abs=table.dx)
        assert table.xi_axis[ixi] == pytest.approx(0.5, abs=table.dxi)

    @pytest.mark.unit
    def test_coarse_phase_grid_rejected(self, packet):
        with pytest.raises(PhaseGridTooCoarse):
            fbi_transform(packet, 0.1, PhaseGrid(stride=16, xi_axis=np.linspace(-2, 2, 41)))

    @pytest.mark.unit
    def test_three_dimensions_rejected(self):
        grid = Grid(dim=3, length=8.0, points=8)
        with pytest.raises(DimensionTooLarge):
            fbi_transform(GridField.zeros(grid), 0.1)

    @pytest.mark.unit
    def test_truncation_splits_table(self, packet):
        table = fbi_transform(packet, 0.1)
        region = RegionB(center=[0.5], h=0.1)
        inside, outside = truncate_to_region(table, region)
        np.testing.assert_array_equal(inside.values + outside.values, table.values)
        assert inside.norm_squared() > outside.norm_squared()


class TestAnnulusProfile:
    """Test the frequency-localized profile phi_h."""

    @pytest.mark.unit
    def test_unit_h1_and_band_limited(self):
        grid = Grid(dim=1, length=16.0, points=512)
        h, eps = 0.05, 0.5
        phi = annulus_profile(grid, h, eps)
        assert flat_h1_norm(grid, phi.values) == pytest.approx(1.0, rel=1e-12)
        spectrum = np.abs(fourier.fft(phi.values))
        k = np.abs(grid.wave_axis) * h
        outside = (k < eps) | (k > 1.0 / eps)
        assert spectrum[outside].max() <= 1e-12 * spectrum.max()

    @pytest.mark.unit
    def test_off_region_tail(self):
        grid = Grid(dim=1, length=16.0, points=512)
        rows = decay_outside_region(grid, [0.1, 0.05])
        assert [row["h"] for row in rows] == [0.1, 0.05]
        for row in rows:
            assert 0.0 <= row["h1_ratio"] < 1.0
            assert row["zone_max"] == max(row[k] for k in ("position", "low", "high", "corner"))


class TestParametrix:
    """Test the transported packet frames."""

    @pytest.mark.unit
    def test_flat_frame(self, flat_line):
        wp = Wavepacket(x0=[0.0], xi0=[1.5], h=0.1)
        frame = short_time_parametrix(wp, flat_line, t=0.5, dt=0.01)
        np.testing.assert_allclose(frame.center, [1.5], atol=1e-12)
        np.testing.assert_allclose(frame.momentum, [1.5])
        assert frame.gamma == pytest.approx(0.5 * 2.25)
        initial = short_time_parametrix(wp, flat_line, t=0.0)
        assert initial.gamma == 0.0

    @pytest.mark.unit
    def test_envelope_needs_exit(self, flat_line):
        wp = Wavepacket(x0=[0.0], xi0=[1.0], h=0.1)
        with pytest.raises(NotExited):
            long_time_envelope(wp, flat_line, t=2.0, t_exit=1.0, dt=0.01)
        with pytest.raises(ConfigurationError):
            long_time_envelope(wp, flat_line, t=0.5, t_exit=1.0)
        envelope = long_time_envelope(wp, flat_line, t=8.0, t_exit=6.0, dt=0.01)
        grid = Grid(dim=1, length=64.0, points=256)
        peak = envelope(grid).max()
        assert peak == pytest.approx(0.1 ** -0.75 * 8.0 ** -0.5, rel=1e-2)
