import numpy as np
import pytest

from abft_guard.cost import (
    MeasuredTimings,
    OverheadEstimate,
    SELECTABLE_SCHEMES,
    base_time,
    scheme_time,
    select,
)
from abft_guard.errors import DocumentError
from abft_guard.roofline import arithmetic_intensity, cmr
from abft_guard.shapes import BINARY16, DeviceProfile, GemmShape
from abft_guard.tiled import Scheme, TilingConfig

T4 = DeviceProfile(name="T4", tensor_throughput=65e12, alu_throughput=65e12 / 8, memory_bandwidth=320e9)


def overhead(shape, scheme, device=T4, tiling=TilingConfig()):
    t_o = base_time(shape, BINARY16, device)
    t_r = scheme_time(shape, BINARY16, device, scheme, tiling)
    return 100.0 * (t_r - t_o) / t_o


class TestBaseTime:
    def test_compute_bound_square(self):
        assert base_time(GemmShape(2048, 2048, 2048), BINARY16, T4) == pytest.approx(
            17179869184 / 65e12, rel=1e-12
        )

    def test_bandwidth_bound_small_fc(self):
        assert base_time(GemmShape(8, 512, 16), BINARY16, T4) == pytest.approx(
            24832 / 320e9, rel=1e-12
        )

    def test_balanced_point(self):
        # square side 48 has AI 16; device with CMR 16 balances both terms
        device = DeviceProfile(name="bal", tensor_throughput=16e9, alu_throughput=2e9, memory_bandwidth=1e9)
        shape = GemmShape(48, 48, 48)
        assert arithmetic_intensity(shape, BINARY16) == cmr(device)
        flops_time = 2 * 48**3 / 16e9
        assert base_time(shape, BINARY16, device) == pytest.approx(flops_time, rel=1e-12)


class TestSchemeTime:
    def test_one_sided_free_when_bandwidth_bound(self):
        shape = GemmShape(8, 512, 16)
        t_o = base_time(shape, BINARY16, T4)
        t_r = scheme_time(shape, BINARY16, T4, Scheme.THREAD_ONE_SIDED)
        assert t_r == pytest.approx(t_o, rel=1e-12)

    def test_replication_doubles_compute_bound_time(self):
        shape = GemmShape(2048, 2048, 2048)
        t_o = base_time(shape, BINARY16, T4)
        for scheme in (Scheme.THREAD_REPLICATION_FULL, Scheme.THREAD_REPLICATION_SINGLE_ACC):
            assert scheme_time(shape, BINARY16, T4, scheme) == pytest.approx(2 * t_o, rel=1e-12)

    def test_global_beats_one_sided_when_compute_bound(self):
        shape = GemmShape(2048, 2048, 2048)
        assert overhead(shape, Scheme.GLOBAL_ABFT) < overhead(shape, Scheme.THREAD_ONE_SIDED)

    def test_one_sided_beats_global_when_bandwidth_bound(self):
        shape = GemmShape(32, 32, 32)
        assert overhead(shape, Scheme.THREAD_ONE_SIDED) < overhead(shape, Scheme.GLOBAL_ABFT)

    def test_unprotected_equals_base(self):
        shape = GemmShape(64, 64, 64)
        assert scheme_time(shape, BINARY16, T4, Scheme.UNPROTECTED) == base_time(shape, BINARY16, T4)

    def test_global_includes_launch_latency(self):
        shape = GemmShape(8, 8, 8)
        t_r = scheme_time(shape, BINARY16, T4, Scheme.GLOBAL_ABFT)
        assert t_r >= T4.verification_launch_latency


class TestOverheadEstimate:
    def test_formula_recomputes_exactly(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            t_o = float(rng.uniform(1e-9, 1e-3))
            t_r = t_o * float(rng.uniform(1.0, 3.0))
            estimate = OverheadEstimate(base_time=t_o, protected_time=t_r)
            again = 100.0 * (estimate.protected_time - estimate.base_time) / estimate.base_time
            assert estimate.overhead_pct == pytest.approx(again, rel=1e-12)


class TestMeasuredTimings:
    def test_parse(self):
        timings = MeasuredTimings.from_csv_text(
            "layer_index,scheme,time_us\n0,global-abft,12.5\n1,thread-one-sided,3.0\n"
        )
        assert timings.get(0, Scheme.GLOBAL_ABFT) == pytest.approx(12.5e-6)
        assert timings.get(1, Scheme.THREAD_ONE_SIDED) == pytest.approx(3.0e-6)
        assert timings.get(2, Scheme.GLOBAL_ABFT) is None

    def test_bad_header(self):
        with pytest.raises(DocumentError):
            MeasuredTimings.from_csv_text("layer,scheme,us\n0,global-abft,1\n")

    def test_bad_scheme(self):
        with pytest.raises(DocumentError):
            MeasuredTimings.from_csv_text("layer_index,scheme,time_us\n0,warp-level,1\n")

    def test_nonpositive_time(self):
        with pytest.raises(DocumentError):
            MeasuredTimings.from_csv_text("layer_index,scheme,time_us\n0,global-abft,0\n")


class TestSelect:
    def test_low_intensity_layers_pick_one_sided(self):
        layers = [(i, s) for i, s in enumerate([GemmShape(8, 512, 16), GemmShape(8, 256, 512), GemmShape(8, 64, 256)])]
        plan = select(layers, BINARY16, T4)
        assert all(layer.chosen is Scheme.THREAD_ONE_SIDED for layer in plan.layers)

    def test_high_intensity_layer_picks_global(self):
        plan = select([(0, GemmShape(2048, 2048, 2048))], BINARY16, T4)
        assert plan.layers[0].chosen is Scheme.GLOBAL_ABFT

    def test_tie_goes_to_global(self):
        shape = GemmShape(64, 64, 64)
        t = base_time(shape, BINARY16, T4)
        timings = MeasuredTimings(
            entries={
                (0, Scheme.UNPROTECTED): t,
                (0, Scheme.GLOBAL_ABFT): 2 * t,
                (0, Scheme.THREAD_ONE_SIDED): 2 * t,
            }
        )
        plan = select([(0, shape)], BINARY16, T4, measured=timings)
        assert plan.layers[0].chosen is Scheme.GLOBAL_ABFT

    def test_measured_override_flips_choice(self):
        shape = GemmShape(2048, 2048, 2048)  # model prefers global here
        t = base_time(shape, BINARY16, T4)
        timings = MeasuredTimings(
            entries={(0, Scheme.GLOBAL_ABFT): 5 * t, (0, Scheme.THREAD_ONE_SIDED): 1.01 * t}
        )
        plan = select([(0, shape)], BINARY16, T4, measured=timings)
        layer = plan.layers[0]
        assert layer.chosen is Scheme.THREAD_ONE_SIDED
        assert layer.estimates[Scheme.THREAD_ONE_SIDED].source == "measured"
        assert layer.estimates[Scheme.GLOBAL_ABFT].source == "measured"

    def test_unknown_layer_in_timings_rejected(self):
        timings = MeasuredTimings(entries={(9, Scheme.GLOBAL_ABFT): 1e-6})
        with pytest.raises(DocumentError):
            select([(0, GemmShape(8, 8, 8))], BINARY16, T4, measured=timings)

    def test_empty_layers_rejected(self):
        with pytest.raises(DocumentError):
            select([], BINARY16, T4)

    def test_never_worse_than_pure_policies(self):
        rng = np.random.default_rng(32)
        for _ in range(25):
            layers = []
            for i in range(int(rng.integers(1, 6))):
                m, n, k = (8 * int(x) for x in rng.integers(1, 64, size=3))
                layers.append((i, GemmShape(m, n, k)))
            plan = select(layers, BINARY16, T4)
            for pure in SELECTABLE_SCHEMES:
                pure_protected = sum(
                    scheme_time(s, BINARY16, T4, pure, TilingConfig()) for _, s in layers
                )
                assert plan.aggregate_protected_time <= pure_protected + 1e-18

    def test_single_crossover_for_squares(self):
        sizes = [32, 48, 64, 96, 128, 192, 256, 384, 512, 768, 1024, 1536, 2048, 3072, 4096]
        prefers_global = [
            overhead(GemmShape(s, s, s), Scheme.GLOBAL_ABFT)
            < overhead(GemmShape(s, s, s), Scheme.THREAD_ONE_SIDED)
            for s in sizes
        ]
        flips = sum(1 for prev, cur in zip(prefers_global, prefers_global[1:]) if prev != cur)
        assert flips == 1
        assert prefers_global[0] is False and prefers_global[-1] is True
