import numpy as np
import pytest

import json

from vccsat.channel import SCENARIOS, scenario, substream
from vccsat.linkphy import (
    ChannelBlock,
    SystemConfig,
    block_debug_dict,
    compute_sinr,
    effective_sum_rate,
    full_signal_roundtrip,
    inter_group_component,
    intra_group_reference,
    mf_precoder,
    sample_block,
    sinr_batch,
    transmit_vector,
)


def make_config(**kwargs):
    base = dict(
        l_antennas=8,
        g_groups=6,
        q_mux=4,
        p_t=10.0,
        shadowing=SCENARIOS["AS"],
        sigma_e2=0.125,
        t_coherence=10_000,
        theta_pilot=12,
    )
    base.update(kwargs)
    return SystemConfig(**base)


def unit_symbols(rng, shape):
    g = rng.standard_normal(shape + (2,))
    return np.sqrt(0.5) * (g[..., 0] + 1j * g[..., 1])


class TestSystemConfig:
    def test_xi_overhead_arithmetic(self):
        assert make_config().xi == pytest.approx(1 - 288 / 10_000)
        baseline = make_config(g_groups=1, q_mux=8, t_coherence=1_000)
        assert baseline.xi == pytest.approx(0.904)

    def test_overhead_must_fit_in_block(self):
        with pytest.raises(ValueError, match="G\\*Q\\*Theta must be < T"):
            make_config(t_coherence=288)

    def test_q_bounds(self):
        with pytest.raises(ValueError, match="q_mux"):
            make_config(q_mux=11)
        with pytest.raises(ValueError, match="q_mux"):
            make_config(q_mux=0)

    def test_n_users(self):
        assert make_config().n_users == 24


class TestMfPrecoder:
    def test_unit_vector_self_precodes(self):
        e1 = np.zeros((1, 4))
        e1[0, 0] = 1.0
        v = mf_precoder(e1)
        assert v.shape == (4, 1)
        assert np.array_equal(v[:, 0], e1[0])

    def test_columns_are_conjugated_rows(self):
        rng = substream(0, 1)
        est = rng.standard_normal((3, 5)) + 1j * rng.standard_normal((3, 5))
        v = mf_precoder(est)
        assert v.shape == (5, 3)
        for b in range(3):
            assert np.array_equal(v[:, b], est[b].conj())

    def test_matched_inner_product_identity(self):
        # h^T v_b = ||h||^2 + h^T err^* when the estimate is h + err
        rng = substream(0, 2)
        h = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        err = 0.1 * (rng.standard_normal(6) + 1j * rng.standard_normal(6))
        v = mf_precoder((h + err)[None, :])
        lhs = h @ v[:, 0]
        rhs = np.linalg.norm(h) ** 2 + h @ err.conj()
        assert lhs == pytest.approx(rhs)

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            mf_precoder(np.ones(4))


class TestSinr:
    def test_single_user_has_no_interference(self):
        config = make_config(g_groups=1, q_mux=1, shadowing=scenario("ILS"))
        rng = substream(1, 0)
        block = sample_block(config, rng)
        sinr = compute_sinr(block, config, alpha2=0.5)
        h = block.true_h[0, 0]
        hh = block.est_h[0, 0]
        assert sinr.shape == (1, 1)
        assert sinr[0, 0] == pytest.approx(0.5 * abs(h @ hh.conj()) ** 2)

    def test_all_ones_perfect_csit(self):
        config = make_config(g_groups=1, q_mux=1, l_antennas=4, sigma_e2=0.0)
        h = np.ones((1, 1, 4), dtype=complex)
        block = ChannelBlock(true_h=h, est_h=h.copy())
        sinr = compute_sinr(block, config, alpha2=1.0)
        assert sinr[0, 0] == pytest.approx(16.0)

    def test_interference_only_from_same_group(self):
        # orthogonal groups: zeroing the other groups' channels changes nothing
        config = make_config(g_groups=2, q_mux=2, l_antennas=4)
        rng = substream(1, 1)
        block = sample_block(config, rng)
        sinr_full = compute_sinr(block, config, 0.3)
        isolated = ChannelBlock(
            true_h=block.true_h * np.array([1.0, 0.0])[:, None, None],
            est_h=block.est_h * np.array([1.0, 0.0])[:, None, None],
        )
        sinr_isolated = compute_sinr(isolated, config, 0.3)
        assert np.allclose(sinr_full[0], sinr_isolated[0])

    def test_monotone_in_alpha2_single_user(self):
        config = make_config(g_groups=1, q_mux=1)
        rng = substream(1, 2)
        block = sample_block(config, rng)
        values = [compute_sinr(block, config, a2)[0, 0] for a2 in (0.1, 1.0, 10.0)]
        assert values[0] < values[1] < values[2]

    def test_interference_limited_ceiling(self):
        config = make_config(g_groups=1, q_mux=3, l_antennas=4)
        rng = substream(1, 3)
        block = sample_block(config, rng)
        inner = block.true_h[0] @ block.est_h[0].conj().T
        power = np.abs(inner) ** 2
        ceiling = power[0, 0] / (power[0, 1:].sum())
        big = compute_sinr(block, config, 1e9)[0, 0]
        assert big == pytest.approx(ceiling, rel=1e-6)
        assert compute_sinr(block, config, 1.0)[0, 0] < ceiling

    def test_batch_matches_single_block(self):
        config = make_config(g_groups=3, q_mux=2, l_antennas=4)
        rng = substream(1, 4)
        blocks = [sample_block(config, rng) for _ in range(5)]
        h = np.stack([b.true_h for b in blocks])
        hh = np.stack([b.est_h for b in blocks])
        batched = sinr_batch(h, hh, 0.7)
        for i, b in enumerate(blocks):
            assert np.allclose(batched[i], compute_sinr(b, config, 0.7))


class TestEffectiveSumRate:
    def test_zero_sinr_gives_zero_rate(self):
        config = make_config()
        assert effective_sum_rate(np.zeros((6, 4)), config) == 0.0

    def test_overhead_scaling(self):
        config = make_config()
        sinr = np.full((6, 4), 1.0)
        assert effective_sum_rate(sinr, config) == pytest.approx(0.9712 * 24.0)

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError):
            effective_sum_rate(np.ones((2, 2)), make_config())


class TestSignalRoundtrip:
    def test_single_group_is_noop(self):
        config = make_config(g_groups=1, q_mux=2, l_antennas=4)
        rng = substream(2, 0)
        block = sample_block(config, rng)
        symbols = unit_symbols(rng, (1, 2))
        noise = unit_symbols(rng, (1, 2))
        y_prime = full_signal_roundtrip(block, config, 0.4, symbols, noise)
        x = transmit_vector(block, 0.4, symbols)
        y = np.einsum("gbl,l->gb", block.true_h, x) + noise
        assert np.array_equal(y_prime, y)

    def test_residual_matches_direct_intra_expression(self):
        config = make_config(g_groups=3, q_mux=2, l_antennas=4)
        rng = substream(2, 1)
        block = sample_block(config, rng)
        symbols = unit_symbols(rng, (3, 2))
        noise = unit_symbols(rng, (3, 2))
        y_prime = full_signal_roundtrip(block, config, 0.4, symbols, noise)
        ref = intra_group_reference(block, 0.4, symbols, noise)
        assert np.max(np.abs(y_prime - ref)) / np.max(np.abs(ref)) < 1e-10

    def test_zero_noise_two_groups_single_slot(self):
        config = make_config(g_groups=2, q_mux=1, l_antennas=4)
        rng = substream(2, 2)
        block = sample_block(config, rng)
        symbols = unit_symbols(rng, (2, 1))
        noise = np.zeros((2, 1), dtype=complex)
        y_prime = full_signal_roundtrip(block, config, 0.25, symbols, noise)
        for g in range(2):
            expected = 0.5 * (block.true_h[g, 0] @ block.est_h[g, 0].conj()) * symbols[g, 0]
            assert y_prime[g, 0] == pytest.approx(expected)

    def test_regenerated_term_is_bit_stable(self):
        config = make_config(g_groups=4, q_mux=2, l_antennas=8)
        rng = substream(2, 3)
        block = sample_block(config, rng)
        symbols = unit_symbols(rng, (4, 2))
        first = inter_group_component(block, 0.4, symbols)
        second = inter_group_component(block, 0.4, symbols)
        assert np.array_equal(first, second)

    def test_shape_validation(self):
        config = make_config(g_groups=2, q_mux=2, l_antennas=4)
        rng = substream(2, 4)
        block = sample_block(config, rng)
        with pytest.raises(ValueError):
            full_signal_roundtrip(block, config, 0.4, np.ones((2, 3)), np.ones((2, 2)))


class TestBlockDebugDump:
    def test_dump_is_json_ready_and_consistent(self):
        config = make_config(g_groups=2, q_mux=2, l_antennas=4)
        rng = substream(3, 0)
        block = sample_block(config, rng)
        dump = json.loads(json.dumps(block_debug_dict(block, config, 0.5)))
        assert np.asarray(dump["true_h_real"]).shape == (2, 2, 4)
        sinr = compute_sinr(block, config, 0.5)
        assert np.allclose(dump["sinr"], sinr)
        assert dump["effective_sum_rate"] == pytest.approx(effective_sum_rate(sinr, config))
