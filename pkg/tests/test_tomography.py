import math
import warnings
from dataclasses import replace

import numpy as np
import pytest

from pdctomo import (
    ComplexJsa,
    DazzlerModel,
    DetectorModel,
    GridMismatch,
    NoStationaryRegion,
    StripeOutsideSupport,
    TraceTooShort,
    UnreachableLobeWarning,
    ValidationError,
    build_jsa,
    simulate_scan,
)
from pdctomo.jsa import phase_classes
from pdctomo.tomography import (
    ReconstructionResult,
    PhaseMap,
    anti_diagonal_cut,
    assemble_complex_jsa,
    build_contrast_map,
    contrast_threshold,
    estimate_noise_floor,
    extract_contrast,
    find_stationary_stripes,
    first_sidelobe_ratio,
    fit_traces,
    one_over_e_width,
    retrieve_phase_along_stripe,
    score,
)

import oracles
from conftest import default_grid, default_model, headroom_seeds, quiet_reconstruct, scan

FS_COUNTS = 4095.0
T = np.arange(100)


def cosine(amplitude, period, phase=0.3, offset=2000.0):
    return offset + amplitude * np.cos(2 * np.pi * T / period + phase)


def signs_for(dataset, cmap=None, **kw):
    cmap = cmap or build_contrast_map(dataset)
    out = []
    for stripe in find_stationary_stripes(cmap):
        try:
            out.append(retrieve_phase_along_stripe(dataset, stripe, noise_floor=cmap.noise_floor, **kw))
        except StripeOutsideSupport:
            pass
    return cmap, out


def truth_signs(dataset, nodes):
    gt = dataset.ground_truth
    cls = phase_classes(gt.values, gt.geometric_phase())
    return np.where(cls[nodes[:, 0], nodes[:, 1]] == 0, 1, -1)


def flips(signs):
    det = np.flatnonzero(signs != 0)
    return [(det[k], det[k + 1]) for k in range(det.size - 1) if signs[det[k]] != signs[det[k + 1]]]


class TestExtractContrast:
    def test_constant_trace(self):
        c, stationary = extract_contrast(np.full(100, 1234.0), noise_floor=0.3)
        assert c == 0.0 and stationary

    def test_pure_cosine_amplitude(self):
        c, stationary = extract_contrast(cosine(0.7 * FS_COUNTS, 10), noise_floor=0.3)
        assert c == pytest.approx(0.7 * FS_COUNTS, rel=0.01)
        assert not stationary

    @pytest.mark.parametrize("period", [7, 13, 2.5, 33])
    def test_period_independence(self, period):
        ref, _ = extract_contrast(cosine(500.0, 10), 0.3)
        c, _ = extract_contrast(cosine(500.0, period), 0.3)
        assert c == pytest.approx(ref, rel=0.02)

    def test_matches_direct_dft_on_whole_periods(self):
        y = cosine(321.0, 10, phase=1.1)
        spec = np.abs(oracles.direct_dft(y - y.mean()))
        c, _ = extract_contrast(y, 0.3)
        assert c == pytest.approx(2 * spec[1:50].max() / 100, rel=1e-6)

    def test_below_noise_is_stationary(self):
        rng = np.random.default_rng(0)
        y = 2000 + rng.normal(0, 5.0, 100) + cosine(1.0, 10, offset=0)
        _, stationary = extract_contrast(y, noise_floor=5.0)
        assert stationary

    def test_slow_trace_is_stationary(self):
        _, stationary = extract_contrast(cosine(800.0, 250), noise_floor=0.3)
        assert stationary

    def test_too_short(self):
        with pytest.raises(TraceTooShort):
            extract_contrast(np.ones(7), 0.3)

    def test_fit_estimator_agrees(self):
        y = cosine(400.0, 7.3) + np.random.default_rng(1).normal(0, 2.0, 100)
        a, _ = fit_traces(y[None], "dft")
        b, _ = fit_traces(y[None], "fit")
        assert b[0] == pytest.approx(400.0, rel=0.01)
        assert a[0] == pytest.approx(b[0], rel=0.005)

    def test_unknown_estimator(self):
        with pytest.raises(ValidationError):
            fit_traces(np.ones((1, 100)), "wavelet")

    def test_threshold(self):
        assert contrast_threshold(1.0, 100) == pytest.approx(0.6)


class TestContrastMap:
    def test_noise_off_proportional_to_modulus(self, wg25_clean):
        cmap = build_contrast_map(wg25_clean)
        keep = ~cmap.stationary_mask
        truth = wg25_clean.ground_truth.modulus[keep]
        c = cmap.contrast[keep]
        k = np.dot(c, truth) / np.dot(truth, truth)
        assert np.linalg.norm(c - k * truth) / np.linalg.norm(k * truth) < 0.01

    def test_noise_floor_noise_off_is_small(self, wg25_clean):
        # quietest decile: weak tails of the JSA plus quantisation, far below the default detector noise
        floor = estimate_noise_floor(wg25_clean.traces)
        assert math.sqrt(1 / 12) <= floor < 0.001 * FS_COUNTS

    def test_noise_floor_lower_bound(self):
        assert estimate_noise_floor(np.full((4, 4, 100), 7)) == pytest.approx(math.sqrt(1 / 12))

    def test_noise_floor_tracks_detector_noise(self):
        ds = scan(2.5, sigma=0.005, seed=3)
        assert estimate_noise_floor(ds.traces) == pytest.approx(0.005 * FS_COUNTS, rel=0.1)

    def test_all_stationary(self):
        ds = scan(2.5, span=2.0, dazzler=DazzlerModel(0.0, 0.0, 0.0))
        cmap = build_contrast_map(ds)
        assert cmap.stationary_mask.all() and cmap.empty
        res = quiet_reconstruct(ds)
        assert res.metadata["empty_contrast"]

    def test_wg10_lower_peak_and_wider(self, wg25_clean, wg10_clean):
        c25 = build_contrast_map(wg25_clean)
        c10 = build_contrast_map(wg10_clean)
        assert c10.contrast.max() < c25.contrast.max()
        center = wg25_clean.grid.center_index
        w25 = one_over_e_width(*anti_diagonal_cut(c25.contrast, center))
        w10 = one_over_e_width(*anti_diagonal_cut(c10.contrast, center))
        assert w10 > 2 * w25


class TestStripes:
    def test_two_wrap_lines(self):
        daz = DazzlerModel(dphi0=math.pi)
        ds = scan(2.5, dazzler=daz)
        stripes = find_stationary_stripes(build_contrast_map(ds))
        assert len(stripes) == 2
        expected = oracles.wrap_line_slope(daz.dphi_slope_s, daz.dphi_slope_i)
        for st in stripes:
            assert st.slope == pytest.approx(expected, rel=0.02)

    def test_default_three_stripes(self, wg25_clean):
        stripes = find_stationary_stripes(build_contrast_map(wg25_clean))
        assert len(stripes) == 3
        assert all(not s.ambiguous for s in stripes)

    def test_no_stripes(self):
        ds = scan(2.5, span=2.0, dazzler=DazzlerModel(math.pi / 5, 0.0, 0.0))
        with pytest.raises(NoStationaryRegion):
            find_stationary_stripes(build_contrast_map(ds))

    def test_single_line_end_to_end(self):
        d = DazzlerModel()
        daz = DazzlerModel(0.0, 0.3 * d.dphi_slope_s, 0.3 * d.dphi_slope_i)
        ds = scan(2.5, span=6.0, dazzler=daz)
        stripes = find_stationary_stripes(build_contrast_map(ds))
        assert len(stripes) == 1
        nodes = stripes[0].nodes
        last = ds.grid.n - 1
        touches = lambda p: p[0] in (0, last) or p[1] in (0, last)  # noqa: E731
        assert touches(nodes[0]) and touches(nodes[-1])

    def test_unknown_model_uses_elongation(self, wg25_clean):
        cmap = replace(build_contrast_map(wg25_clean), expected_stationary=None)
        stripes = find_stationary_stripes(cmap)
        assert cmap.ambiguous
        assert len(stripes) >= 3 and all(s.ambiguous for s in stripes)


class TestPhaseAlongStripe:
    def test_flips_at_nulls_noise_off(self, wg25_clean):
        _, sets = signs_for(wg25_clean)
        assert len(sets) == 3
        for ss in sets:
            nodes = ss.stripe.nodes
            true = truth_signs(wg25_clean, nodes)
            det = ss.signs != 0
            agree = np.mean(ss.signs[det] == true[det])
            assert max(agree, 1 - agree) == 1.0
            true_flips = [k for k in range(len(nodes) - 1) if true[k] != true[k + 1]]
            for a, b in flips(ss.signs):
                dist = min(np.abs(nodes[[a, b]][:, None] - nodes[[t, t + 1]][None]).max(-1).min() for t in true_flips)
                assert dist <= 1

    def test_main_lobe_and_first_sidelobe(self):
        # stripe through the centre, perpendicular to the ridge
        ds = scan(2.5, span=6.0, dazzler=DazzlerModel(dphi0=0.0))
        cmap = build_contrast_map(ds)
        stripe = [s for s in find_stationary_stripes(cmap) if s.nodes.tolist().count([30, 30])][0]
        ss = retrieve_phase_along_stripe(ds, stripe, noise_floor=cmap.noise_floor)
        nodes = stripe.nodes
        k0 = nodes.tolist().index([30, 30])
        true = truth_signs(ds, nodes)
        # walk out to just before the second null on one side
        changes = [k for k in range(k0, len(nodes) - 1) if true[k] != true[k + 1]]
        segment = slice(k0, changes[1] + 1)
        sub = ss.signs[segment]
        assert len(flips(sub)) == 1
        a, b = flips(sub)[0]
        assert abs((k0 + a) - changes[0]) <= 1 or abs((k0 + b) - (changes[0] + 1)) <= 1
        main = ss.signs[k0 : changes[0] + 1]
        assert np.all(main[main != 0] == main[main != 0][0])

    def test_null_node_undetermined(self):
        base = build_jsa(default_grid(4.0), default_model())
        values = np.array(base.values)
        seeds = headroom_seeds(base)
        ds0 = simulate_scan(base, seeds, DazzlerModel(dphi0=0.0), DetectorModel(gaussian_noise_sigma=0.0))
        cmap = build_contrast_map(ds0)
        stripe = find_stationary_stripes(cmap)[0]
        i, j = stripe.nodes[len(stripe.nodes) // 3]
        values[i, j] = 0.0
        jsa = ComplexJsa(base.grid, values, base.norm_constant, base.model)
        ds = simulate_scan(jsa, seeds, DazzlerModel(dphi0=0.0), DetectorModel(gaussian_noise_sigma=0.0))
        ss = retrieve_phase_along_stripe(ds, stripe, noise_floor=cmap.noise_floor)
        assert ss.signs[len(stripe.nodes) // 3] == 0

    def test_outside_support(self, wg25_clean):
        cmap = build_contrast_map(wg25_clean)
        stripe = find_stationary_stripes(cmap)[0]
        far = replace(stripe, nodes=np.array([[0, 0], [1, 0], [0, 1]]))
        with pytest.raises(StripeOutsideSupport):
            retrieve_phase_along_stripe(wg25_clean, far, noise_floor=cmap.noise_floor)

    def test_pulse_index_range(self, wg25_clean):
        stripe = find_stationary_stripes(build_contrast_map(wg25_clean))[0]
        with pytest.raises(ValidationError):
            retrieve_phase_along_stripe(wg25_clean, stripe, pulse_index=100)

    def test_any_pulse_gives_same_signs(self, wg25_clean):
        cmap, sets = signs_for(wg25_clean)
        stripe = sets[1].stripe
        a = retrieve_phase_along_stripe(wg25_clean, stripe, pulse_index=3, noise_floor=cmap.noise_floor)
        b = retrieve_phase_along_stripe(wg25_clean, stripe, pulse_index=71, noise_floor=cmap.noise_floor)
        both = (a.signs != 0) & (b.signs != 0)
        assert both.sum() > 20
        assert np.array_equal(a.signs[both], b.signs[both])


class TestAssembly:
    def test_round_trip_real_part(self, wg25_clean_result, wg25_jsa):
        r = wg25_clean_result
        assert r.complex_jsa.norm() == pytest.approx(1.0, rel=1e-9)
        assert r.metrics["real_part_rel_l2_error"] < 0.02
        err = np.linalg.norm(r.complex_jsa.values.real - wg25_jsa.values.real) / np.linalg.norm(wg25_jsa.values.real)
        assert err < 0.02

    def test_reference_is_phase_zero(self, wg25_clean_result):
        ref = tuple(wg25_clean_result.phase.reference_point)
        assert wg25_clean_result.phase.phase_class[ref] == 0.0
        assert ref == (50, 50)

    def test_interpolated_flagged(self, wg25_clean_result):
        r = wg25_clean_result
        assert r.interpolated.any()
        assert r.metrics["modulus_rel_l2_error"] <= r.metrics["modulus_rel_l2_error_all_nodes"]

    def test_modulus_only(self, wg25_clean):
        cmap = build_contrast_map(wg25_clean)
        with pytest.warns(UnreachableLobeWarning):
            r = assemble_complex_jsa(cmap, [], model=wg25_clean.pdc)
        assert np.isnan(r.phase.phase_class).all()
        assert r.complex_jsa.norm() == pytest.approx(1.0, rel=1e-9)
        assert score(r, wg25_clean.ground_truth)["modulus_rel_l2_error"] < 0.02

    def test_gauge_flip(self, wg25_clean):
        cmap, sets = signs_for(wg25_clean)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            a = assemble_complex_jsa(cmap, sets, model=wg25_clean.pdc, fix_reference=False)
            b = assemble_complex_jsa(cmap, [s.inverted() for s in sets], model=wg25_clean.pdc, fix_reference=False)
            c = assemble_complex_jsa(cmap, [s.inverted() for s in sets], model=wg25_clean.pdc)
        assert np.allclose(a.complex_jsa.values, -b.complex_jsa.values)
        assert np.array_equal(a.complex_jsa.values, c.complex_jsa.values)
        ma, mb = score(a, wg25_clean.ground_truth), score(b, wg25_clean.ground_truth)
        assert ma == pytest.approx(mb)

    def test_unreachable_lobe_warning(self, wg25_clean):
        cmap, sets = signs_for(wg25_clean)
        with pytest.warns(UnreachableLobeWarning):
            r = assemble_complex_jsa(cmap, sets[:1], model=wg25_clean.pdc)
        assert r.metadata["unreached_lobes"] > 0

    def test_without_model_is_real(self, wg25_clean):
        cmap, sets = signs_for(wg25_clean)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            r = assemble_complex_jsa(cmap, sets)
        assert np.all(r.complex_jsa.values.imag == 0)
        assert r.metadata["geometric_phase"] == "none"


class TestDegradation:
    @pytest.mark.filterwarnings("ignore::pdctomo.SaturationWarning")
    def test_error_non_decreasing_in_noise(self):
        means = []
        for sigma in (0.0, 0.005, 0.02, 0.05):
            # the noise-free scan does not depend on the seed
            seeds = range(1) if sigma == 0 else range(10)
            errs = [quiet_reconstruct(scan(2.5, sigma=sigma, seed=s)).metrics["modulus_rel_l2_error"] for s in seeds]
            means.append(float(np.mean(errs)))
        assert all(b >= a for a, b in zip(means, means[1:])), means


class TestScore:
    def _as_result(self, jsa, values=None):
        values = jsa.values if values is None else values
        cj = ComplexJsa(jsa.grid, values, jsa.norm_constant, jsa.model)
        cls = phase_classes(values, jsa.geometric_phase())
        return ReconstructionResult(
            modulus=np.abs(values),
            phase=PhaseMap(jsa.grid, cls, jsa.grid.center_index),
            complex_jsa=cj,
            contrast=np.abs(values),
            interpolated=np.zeros(jsa.grid.shape, dtype=bool),
        )

    def test_identity(self, wg25_jsa):
        m = score(self._as_result(wg25_jsa), wg25_jsa)
        assert m["modulus_rel_l2_error"] == 0.0
        assert m["phase_agreement_fraction"] == 1.0
        assert m["real_part_rel_l2_error"] == 0.0
        assert m["sidelobe_ratio"] == pytest.approx(oracles.SINC_EXTREMUM_RATIO, abs=0.005)

    def test_global_flip(self, wg25_jsa):
        flipped = -np.asarray(wg25_jsa.values)
        m = score(self._as_result(wg25_jsa, flipped), wg25_jsa)
        assert m["phase_agreement_fraction"] == 1.0
        assert m["real_part_rel_l2_error"] == 0.0
        truth_flipped = ComplexJsa(wg25_jsa.grid, flipped, wg25_jsa.norm_constant, wg25_jsa.model)
        assert score(self._as_result(wg25_jsa), truth_flipped)["phase_agreement_fraction"] == 1.0

    def test_grid_mismatch(self, wg25_jsa):
        other = build_jsa(default_grid(2.0), default_model())
        with pytest.raises(GridMismatch):
            score(self._as_result(other), wg25_jsa)

    def test_noise_off_sidelobe(self, wg25_clean_result):
        assert wg25_clean_result.metrics["sidelobe_ratio"] == pytest.approx(0.217, abs=0.01)


class TestCuts:
    def test_one_over_e_width_gaussian(self):
        x = np.arange(-50, 51)
        p = np.exp(-(x / 7.0) ** 2)
        assert one_over_e_width(p, 50) == pytest.approx(14.0, abs=0.05)

    def test_sidelobe_ratio_of_sinc(self):
        x = np.linspace(-20, 20, 4001)
        p = np.abs(np.sinc(x / np.pi))
        assert first_sidelobe_ratio(p, 2000) == pytest.approx(oracles.SINC_EXTREMUM_RATIO, abs=1e-5)

    def test_cut_through_centre(self):
        m = np.arange(25).reshape(5, 5)
        cut, c0 = anti_diagonal_cut(m, (2, 2))
        assert cut.tolist() == [4, 8, 12, 16, 20] and c0 == 2
