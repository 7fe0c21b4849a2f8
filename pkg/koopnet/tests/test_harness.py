import numpy as np
from django.core.exceptions import ImproperlyConfigured
from django.test import tag

from koopnet.control import plan_horizon
from koopnet.dynamics import DoublePendulum
from koopnet.errors import InvariantViolation, StaleCacheError
from koopnet.harness import EpisodeSetup, StepRecord, actuator_fallback, run_episode, run_episodes
from koopnet.harness.episode import EpisodeResult, ca_failure_forced, check_records
from koopnet.harness.metrics import aggregate_metrics, episode_metrics, total_cost
from koopnet.harness.sweeps import SWEEP_COLUMNS, run_sweep, sweep_config
from koopnet.koopman import embed_state, predict_missing_state
from koopnet.scheduler import SchedulerConfig
from koopnet.test import TestCase, linear_coeffs, quiet_config, small_model


def settled_model(kind="proposed"):
    model = small_model(kind)
    model.Kx[:] = 0.9 * np.eye(model.latent_dim)
    return model


def experiment(slots=20, horizon=4, **episode):
    episode = dict({"slots": slots}, **episode)
    return quiet_config(episode=episode, control={"horizon": horizon, "require_stable": False})


def make_setup(model=None, coeffs=None, reliable=False, **kwargs):
    model = model or settled_model()
    config = experiment(**kwargs)
    setup = EpisodeSetup.from_config(config, model, coeffs or linear_coeffs())
    if reliable:
        setup.sc_power = setup.ca_power = 1e6
    return setup


def make_record(**overrides):
    values = dict(
        t=0, a=0, gamma=0.0, sc_delivered=False, ca_success=False,
        x=np.zeros(2), x_tilde=np.zeros(2), u=np.zeros(1), u_tilde=np.zeros(1),
        beta=1, queue=0.0, battery=1.0, cost=0.0, error=0.0, a0_feasible=True, starved=False,
        overflow=False, cache_empty=False, saturated=False, lyapunov=0.0,
    )
    values.update(overrides)
    return StepRecord(**values)


class ActuatorFallbackTests(TestCase):
    def setUp(self):
        self.cache = [np.array([1.0]), np.array([2.0]), np.array([3.0])]

    def test_replays_cached_plan(self):
        u, overflow, empty = actuator_fallback("cache", self.cache, 12, 10, None, 1)
        self.assertArrayEqual(u, [3.0])
        self.assertFalse(overflow or empty)

    def test_holds_last_entry_past_the_plan(self):
        u, overflow, empty = actuator_fallback("cache", self.cache, 15, 10, None, 1)
        self.assertArrayEqual(u, [3.0])
        self.assertTrue(overflow)

    def test_empty_cache(self):
        u, overflow, empty = actuator_fallback("cache", None, 0, None, None, 2)
        self.assertArrayEqual(u, np.zeros(2))
        self.assertTrue(empty)
        self.assertFalse(overflow)

    def test_negative_offset(self):
        self.assertRaises(StaleCacheError, actuator_fallback, "cache", self.cache, 9, 10, None, 1)

    def test_baselines(self):
        self.assertArrayEqual(actuator_fallback("b1-zero", self.cache, 12, 10, np.array([4.0]), 1)[0], [0.0])
        self.assertArrayEqual(actuator_fallback("b2-hold", self.cache, 12, 10, np.array([4.0]), 1)[0], [4.0])
        self.assertTrue(actuator_fallback("b2-hold", None, 0, None, None, 1)[2])

    def test_unknown_fallback(self):
        self.assertRaises(ImproperlyConfigured, actuator_fallback, "retry", self.cache, 12, 10, None, 1)


class ForcedFailureTests(TestCase):
    def test_single_burst(self):
        bursts = {"start": 5, "length": 3}
        self.assertEqual([t for t in range(12) if ca_failure_forced(bursts, t)], [5, 6, 7])

    def test_periodic_bursts(self):
        bursts = {"start": 2, "length": 2, "every": 5}
        self.assertEqual([t for t in range(14) if ca_failure_forced(bursts, t)], [2, 3, 7, 8, 12, 13])

    def test_disabled(self):
        self.assertFalse(ca_failure_forced(None, 3))
        self.assertFalse(ca_failure_forced({"start": 0, "length": 0}, 3))


class EpisodeSetupTests(TestCase):
    def test_controller_must_match_model(self):
        config = experiment(controller="dkuc")
        self.assertRaises(ImproperlyConfigured, EpisodeSetup.from_config, config, settled_model(), linear_coeffs())

    def test_unknown_fallback(self):
        setup = make_setup()
        self.assertRaises(ImproperlyConfigured, EpisodeSetup, **dict(vars(setup), fallback="retry"))

    def test_link_powers_meet_targets(self):
        setup = make_setup()
        self.assertGreater(setup.sc_power, 0.0)
        self.assertEqual(setup.sc_power, setup.ca_power)
        self.assertEqual(setup.horizon, 4)
        self.assertEqual(setup.state_box[1][0], 0.05)


class EpisodeTests(TestCase):
    def test_reliable_links_track_the_state(self):
        setup = make_setup(reliable=True, force_schedule=True)
        result = run_episode(setup, seed=0)
        self.assertEqual(len(result.records), 20)
        self.assertFalse(result.truncated)
        for record in result.records:
            self.assertTrue(record.sc_delivered and record.ca_success)
            self.assertArrayEqual(record.x_tilde, record.x)
            self.assertArrayEqual(record.u_tilde, record.u)
            self.assertEqual(record.beta, 1)

    def test_reproducible(self):
        setup = make_setup()
        first = run_episode(setup, seed=3, episode=2)
        second = run_episode(setup, seed=3, episode=2)
        self.assertEqual([r.cost for r in first.records], [r.cost for r in second.records])
        self.assertEqual([r.a for r in first.records], [r.a for r in second.records])

    def test_episodes_start_from_different_states(self):
        setup = make_setup(slots=1)
        first = run_episode(setup, seed=3, episode=0)
        second = run_episode(setup, seed=3, episode=1)
        self.assertFalse(np.array_equal(first.records[0].x, second.records[0].x))

    def test_burst_replays_the_cached_plan(self):
        setup = make_setup(reliable=True, force_schedule=True, ca_failures={"start": 5, "length": 3})
        records = run_episode(setup, seed=1).records
        model = setup.model
        plan = plan_horizon(model, setup.solution, embed_state(model, records[4].x),
                            embed_state(model, setup.x0), setup.horizon)
        self.assertArrayEqual(records[4].u_tilde, plan[0])
        for t in (5, 6, 7):
            self.assertFalse(records[t].ca_success)
            self.assertFalse(records[t].overflow)
            self.assertArrayEqual(records[t].u_tilde, plan[t - 4])
        self.assertTrue(records[8].ca_success)

    def test_long_burst_overflows(self):
        setup = make_setup(reliable=True, force_schedule=True, horizon=2, ca_failures={"start": 5, "length": 4})
        records = run_episode(setup, seed=1).records
        self.assertFalse(records[5].overflow)
        self.assertTrue(all(records[t].overflow for t in (6, 7, 8)))
        for t in (6, 7, 8):
            self.assertArrayEqual(records[t].u_tilde, records[5].u_tilde)

    def test_baseline_fallbacks(self):
        bursts = {"start": 5, "length": 3}
        zero = run_episode(make_setup(reliable=True, force_schedule=True, fallback="b1-zero",
                                      ca_failures=bursts), seed=1).records
        hold = run_episode(make_setup(reliable=True, force_schedule=True, fallback="b2-hold",
                                      ca_failures=bursts), seed=1).records
        for t in (5, 6, 7):
            self.assertArrayEqual(zero[t].u_tilde, np.zeros(2))
            self.assertArrayEqual(hold[t].u_tilde, hold[4].u)

    def test_outage_before_any_plan(self):
        setup = make_setup(reliable=True, force_schedule=True, ca_failures={"start": 0, "length": 2})
        records = run_episode(setup, seed=1).records
        self.assertTrue(records[0].cache_empty and records[1].cache_empty)
        self.assertArrayEqual(records[0].u_tilde, np.zeros(2))
        self.assertFalse(records[2].cache_empty)

    def test_blocked_sensor_link_predicts_the_state(self):
        setup = make_setup(reliable=True, force_schedule=True, sc_blocked=True)
        records = run_episode(setup, seed=2).records
        self.assertEqual([r.beta for r in records], list(range(1, 21)))
        self.assertFalse(any(r.sc_delivered for r in records))
        self.assertArrayEqual(records[0].x_tilde, records[0].x)
        expected = predict_missing_state(setup.model, records[0].x, [r.u_tilde for r in records[:3]], 3)
        self.assertArrayAlmostEqual(records[3].x_tilde, expected, rtol=1e-12, atol=1e-15)

    def test_scheduled_run_respects_the_error_budget(self):
        setup = make_setup(coeffs=linear_coeffs(0.0, 0.05), slots=60)
        records = run_episode(setup, seed=4).records
        self.assertGreater(sum(r.a for r in records), 0)
        for record in records:
            if record.a == 0:
                self.assertLessEqual(record.error, setup.scheduler.delta)
            self.assertEqual(len(record.constraint), 4)

    def test_divergence_truncates(self):
        class Exploding(DoublePendulum):
            def advance(self, x, u):
                return np.full(4, np.inf)

        setup = make_setup()
        setup.plant = Exploding()
        result = run_episode(setup, seed=0)
        self.assertTrue(result.truncated)
        self.assertEqual(len(result.records), 1)

    def test_parallel_matches_serial(self):
        setup = make_setup(slots=10)
        serial = run_episodes(setup, 3, seed=5, workers=1)
        parallel = run_episodes(setup, 3, seed=5, workers=2)
        self.assertEqual([r.episode for r in parallel], [0, 1, 2])
        for a, b in zip(serial, parallel):
            self.assertEqual([r.cost for r in a.records], [r.cost for r in b.records])


class CheckRecordsTests(TestCase):
    def setUp(self):
        self.cfg = SchedulerConfig(delta=0.3)

    def test_clean_trace(self):
        check_records([make_record(t=0), make_record(t=1, a=1, gamma=1.0, queue=1.0)], self.cfg)

    def test_skipping_above_the_error_budget(self):
        with self.assertRaises(InvariantViolation) as ctx:
            check_records([make_record(t=3, error=0.5)], self.cfg)
        self.assertEqual(ctx.exception.step, 3)

    def test_starved_slots_may_skip(self):
        check_records([make_record(error=0.5, starved=True)], self.cfg)

    def test_delivered_state_must_be_used(self):
        record = make_record(a=1, gamma=1.0, sc_delivered=True, queue=1.0, x=np.ones(2))
        self.assertRaises(InvariantViolation, check_records, [record], self.cfg)

    def test_fresh_plan_must_be_applied(self):
        record = make_record(ca_success=True, u=np.ones(1))
        self.assertRaises(InvariantViolation, check_records, [record], self.cfg)

    def test_transmission_rate(self):
        records = [make_record(t=t, a=1, gamma=0.0, queue=0.0) for t in range(4)]
        self.assertRaises(InvariantViolation, check_records, records, self.cfg)

    def outage_trace(self, replayed, overflow=(False, False, False)):
        """ Plan [[1], [2], [3]] arrives at slot 0, then three CA outages. """
        plan = np.array([[1.0], [2.0], [3.0]])
        records = [make_record(t=0, ca_success=True, u=plan[0], u_tilde=plan[0], cache_start=0, plan=plan)]
        for t, (u, flag) in enumerate(zip(replayed, overflow), start=1):
            records.append(make_record(t=t, u=np.array([9.0]), u_tilde=np.array([u]), cache_start=0,
                                       plan=np.array([[9.0]] * 3), overflow=flag))
        return records

    def test_outage_replays_cache_offset(self):
        check_records(self.outage_trace([2.0, 3.0, 3.0], overflow=(False, False, True)), self.cfg)

    def test_outage_with_wrong_offset(self):
        with self.assertRaises(InvariantViolation) as ctx:
            check_records(self.outage_trace([2.0, 2.0, 3.0], overflow=(False, False, True)), self.cfg)
        self.assertEqual(ctx.exception.step, 2)

    def test_overflow_must_be_flagged(self):
        with self.assertRaises(InvariantViolation) as ctx:
            check_records(self.outage_trace([2.0, 3.0, 3.0]), self.cfg)
        self.assertEqual(ctx.exception.step, 3)

    def test_baseline_fallbacks(self):
        check_records(self.outage_trace([0.0, 0.0, 0.0]), self.cfg, fallback="b1-zero")
        check_records(self.outage_trace([1.0, 1.0, 1.0]), self.cfg, fallback="b2-hold")
        self.assertRaises(InvariantViolation, check_records, self.outage_trace([1.0, 1.0, 1.0]), self.cfg,
                          fallback="b1-zero")

    def test_outage_before_any_plan_applies_zero(self):
        check_records([make_record(t=0, u_tilde=np.zeros(1), cache_empty=True)], self.cfg)
        self.assertRaises(InvariantViolation, check_records, [make_record(t=0, u_tilde=np.ones(1))], self.cfg)

    def test_missing_cache_source(self):
        record = make_record(t=4, cache_start=2, u_tilde=np.ones(1))
        self.assertRaises(InvariantViolation, check_records, [record], self.cfg)


class MetricsTests(TestCase):
    def test_total_cost(self):
        records = [make_record(cost=2.0, a=1), make_record(cost=4.0, a=0)]
        self.assertEqual(total_cost(records, 1.0), 3.5)
        self.assertEqual(total_cost(records, 0.0), 3.0)
        self.assertRaises(ValueError, total_cost, [], 1.0)

    def test_episode_metrics(self):
        records = [make_record(t=t, cost=1.0, a=t % 2, beta=b, battery=1.0 - 0.1 * t)
                   for t, b in enumerate([1, 2, 1, 2])]
        row = episode_metrics(EpisodeResult(episode=0, seed=0, records=records), 2.0)
        self.assertEqual(row["transmissions"], 2)
        self.assertEqual(row["transmission_rate"], 0.5)
        self.assertEqual(row["total_cost"], 2.0)
        self.assertEqual(row["aoi_mean"], 1.5)
        self.assertEqual(row["aoi_var"], 0.25)
        self.assertAlmostEqual(row["battery_final"], 0.7, places=12)

    def test_aggregate(self):
        short = EpisodeResult(0, 0, [make_record(cost=1.0, a=1, battery=0.5)])
        long = EpisodeResult(1, 0, [make_record(cost=3.0, battery=0.9), make_record(cost=3.0, battery=0.8)],
                             truncated=True)
        metrics = aggregate_metrics([short, long], 0.0)
        self.assertEqual(metrics.episodes, 2)
        self.assertEqual(metrics.control_cost, 2.0)
        self.assertEqual(metrics.control_cost_var, 1.0)
        self.assertEqual(metrics.transmissions, 0.5)
        self.assertEqual(metrics.truncated, 1)
        self.assertArrayAlmostEqual(metrics.battery_trace, [0.7, 0.8], rtol=1e-12)
        self.assertEqual(metrics.transmission_trace, [0.5, 0.0])
        self.assertEqual(len(metrics.rows), 2)

    def test_aggregate_needs_records(self):
        self.assertRaises(ValueError, aggregate_metrics, [EpisodeResult(0, 0, [])], 1.0)


class SweepTests(TestCase):
    def test_ca_failure_axis_becomes_a_burst(self):
        config = sweep_config(experiment(), "ca-failures", 3)
        self.assertEqual(config["episode"]["ca_failures"], {"start": 1, "length": 3, "every": None})

    def test_plain_axis(self):
        base = experiment()
        config = sweep_config(base, "delta", 0.5)
        self.assertEqual(config["scheduler"]["delta"], 0.5)
        self.assertEqual(base["scheduler"]["delta"], 0.3)

    def test_unknown_axis(self):
        self.assertRaises(ValueError, sweep_config, experiment(), "bandwidth", 1.0)

    def test_empty_values(self):
        self.assertEqual(run_sweep(experiment(), "delta", [], settled_model(), linear_coeffs()), [])

    def test_rows_per_value(self):
        rows = run_sweep(experiment(slots=10), "outage", [1e-3, 1e-1], settled_model(), linear_coeffs(0.0, 0.05),
                         episodes=2, seed=0, workers=1)
        self.assertEqual([row["value"] for row in rows], [1e-3, 1e-1])
        self.assertTrue(all(set(row) == set(SWEEP_COLUMNS) for row in rows))
        self.assertGreater(rows[0]["sc_power_w"], rows[1]["sc_power_w"])
        self.assertEqual(rows[0]["episodes"], 2)

    @tag("slow")
    def test_looser_outage_target_adds_retransmissions(self):
        # The error surrogate ignores the state, so extra transmissions come from SC retries only
        targets = [1e-4, 1e-2, 1e-1]
        rows = run_sweep(experiment(slots=1000), "outage", targets, settled_model(), linear_coeffs(0.0, 0.01),
                         episodes=20, seed=0, workers=1)
        transmissions = [row["transmissions"] for row in rows]
        self.assertTrue(np.all(np.diff(transmissions) >= 0), transmissions)
        self.assertGreater(transmissions[-1], transmissions[0])
