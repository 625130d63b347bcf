"""Gateway core: ingest, guarded commands, event stream, recovery."""

from datetime import date, datetime, timedelta, timezone

import pytest

from tadbot.experiment import CareKind, Stimulus, read_events, schedule_trial
from tadbot.gateway import (
    DeviceEntry,
    DeviceUnreachableError,
    Gateway,
    GatewayConfig,
    GuardDeniedError,
    UnknownCameraError,
    UnknownDeviceError,
    WebhookNotifier,
)
from tadbot.protocol import Motion, decode
from tadbot.simdevice import InProcessLink, SimDevice

UTC = timezone.utc


class ManualClock:
    def __init__(self, start: datetime):
        self.now = start

    def __call__(self) -> datetime:
        return self.now

    def advance(self, seconds: float) -> None:
        self.now += timedelta(seconds=seconds)


class RecordingNotifier:
    def __init__(self, fail_times: int = 0):
        self.delivered: list[Motion] = []
        self.attempts = 0
        self.fail_times = fail_times

    def deliver(self, motion: Motion) -> bool:
        self.attempts += 1
        if self.attempts <= self.fail_times:
            return False
        self.delivered.append(motion)
        return True


def build_gateway(tmp_path, clock, notifier=None, stimulus_now=Stimulus.ACTUATED_TADBOT):
    """Gateway with one camera, one in-process device, and one active trial.

    The trial is arranged so `clock` currently sits inside the phase with
    the requested stimulus.
    """
    config = GatewayConfig(
        devices={"tb-01": DeviceEntry(pair_id="pair-a")},
        cameras={"cam-1": "pair-a"},
        data_dir=tmp_path / "data",
        motion_threshold=0.02,
    )
    gw = Gateway(config, notifier=notifier, clock=clock)
    trial = schedule_trial("pair-a", "can-1", date(2024, 1, 1), seed=3,
                           fed_confirmed=True)
    gw.add_trial(trial)
    target = next(p for p in trial.phases if p.stimulus is stimulus_now)
    clock.now = datetime(target.start_date.year, target.start_date.month,
                         target.start_date.day, 12, tzinfo=UTC) + timedelta(days=1)
    device = SimDevice("tb-01")
    gw.register_device_link("tb-01", InProcessLink(device))
    return gw, device, trial


def motion_msg(score=0.07, camera="cam-1", at=None):
    return Motion(camera=camera, score=score,
                  ts=at or datetime(2024, 1, 2, 9, 0, tzinfo=UTC))


# ---- motion ingest ----

def test_ingest_above_threshold_stores_and_notifies(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    notifier = RecordingNotifier()
    gw, _, trial = build_gateway(tmp_path, clock, notifier)
    result = gw.ingest_motion(motion_msg(score=0.07))
    assert result.notified
    assert notifier.delivered[0].score == 0.07
    events = read_events(gw.config.data_dir / f"trial-{trial.trial_id}.log")
    kinds = [e.kind for e in events]
    assert CareKind.MOTION_DETECTED in kinds


def test_ingest_below_threshold_stores_without_notifying(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    notifier = RecordingNotifier()
    gw, _, _ = build_gateway(tmp_path, clock, notifier)
    result = gw.ingest_motion(motion_msg(score=0.005))
    assert not result.notified
    assert notifier.delivered == []
    assert result.record.seq >= 1


def test_ingest_unknown_camera_rejected(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, _ = build_gateway(tmp_path, clock)
    with pytest.raises(UnknownCameraError):
        gw.ingest_motion(motion_msg(camera="cam-unknown"))


def test_ingest_duplicate_is_idempotent(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    notifier = RecordingNotifier()
    gw, _, _ = build_gateway(tmp_path, clock, notifier)
    first = gw.ingest_motion(motion_msg())
    second = gw.ingest_motion(motion_msg())
    assert second.duplicate
    assert second.record.seq == first.record.seq
    assert len(notifier.delivered) == 1
    assert gw.broker.counts()["motion"] == 1


def test_webhook_retries_then_gives_up():
    sleeps = []
    calls = []

    def post(url, body):
        calls.append(body)
        raise ConnectionError("down")

    notifier = WebhookNotifier("http://example.invalid/hook", post=post,
                               sleep=sleeps.append)
    ok = notifier.deliver(motion_msg())
    assert not ok
    assert len(calls) == 4  # initial + 3 retries
    assert sleeps == [1.0, 2.0, 4.0]


def test_webhook_succeeds_after_transient_failure():
    sleeps = []
    state = {"n": 0}

    def post(url, body):
        state["n"] += 1
        if state["n"] < 3:
            raise ConnectionError("flaky")

    notifier = WebhookNotifier("http://example.invalid/hook", post=post,
                               sleep=sleeps.append)
    assert notifier.deliver(motion_msg())
    assert sleeps == [1.0, 2.0]


# ---- commands ----

def test_command_allowed_in_actuated_phase(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, device, trial = build_gateway(tmp_path, clock,
                                      stimulus_now=Stimulus.ACTUATED_TADBOT)
    ack = gw.command_device("tb-01", "activate", mode="begging")
    assert ack.ok
    device.tick()
    assert device.setpoint_hz == 16.0
    events = read_events(gw.config.data_dir / f"trial-{trial.trial_id}.log")
    activations = [e for e in events if e.kind is CareKind.MODE_ACTIVATED]
    assert len(activations) == 1
    assert activations[0].payload == "begging"


def test_command_denied_in_inert_phase(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, device, _ = build_gateway(tmp_path, clock, stimulus_now=Stimulus.INERT_TADBOT)
    with pytest.raises(GuardDeniedError) as exc:
        gw.command_device("tb-01", "activate", mode="begging")
    assert exc.value.decision.phase is Stimulus.INERT_TADBOT
    device.tick()
    assert device.setpoint_hz == 0.0  # nothing reached the device


def test_command_denied_in_live_phase(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, _ = build_gateway(tmp_path, clock, stimulus_now=Stimulus.LIVE_CROSS_FOSTER)
    with pytest.raises(GuardDeniedError):
        gw.command_device("tb-01", "activate", mode="swimming")


def test_stop_allowed_in_any_phase(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, _ = build_gateway(tmp_path, clock, stimulus_now=Stimulus.INERT_TADBOT)
    ack = gw.command_device("tb-01", "stop")
    assert ack.ok  # idempotent on an idle device


def test_command_denied_without_active_trial(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, trial = build_gateway(tmp_path, clock)
    clock.now = datetime(trial.end_date.year, trial.end_date.month,
                         trial.end_date.day, 12, tzinfo=UTC) + timedelta(days=30)
    with pytest.raises(GuardDeniedError) as exc:
        gw.command_device("tb-01", "activate", mode="begging")
    assert "no active trial" in str(exc.value)


def test_command_unknown_device(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, _ = build_gateway(tmp_path, clock)
    with pytest.raises(UnknownDeviceError):
        gw.command_device("tb-99", "stop")


def test_command_unreachable_device(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, _ = build_gateway(tmp_path, clock)
    gw.config.devices["tb-02"] = DeviceEntry(pair_id=None)
    with pytest.raises(DeviceUnreachableError):
        gw.command_device("tb-02", "stop")


def test_interlock_error_relayed_in_ack(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, _ = build_gateway(tmp_path, clock)
    ack = gw.command_device("tb-01", "set_tension", tension_n=2.5)
    assert not ack.ok
    assert "buckling" in ack.error


def test_bench_device_without_pair_skips_guard(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, _ = build_gateway(tmp_path, clock, stimulus_now=Stimulus.INERT_TADBOT)
    bench = SimDevice("bench-01")
    gw.config.devices["bench-01"] = DeviceEntry(pair_id=None)
    gw.register_device_link("bench-01", InProcessLink(bench))
    ack = gw.command_device("bench-01", "activate", mode="begging")
    assert ack.ok


# ---- event stream ----

def test_stream_replay_then_new_records(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, _ = build_gateway(tmp_path, clock)
    for i in range(5):
        gw.ingest_motion(motion_msg(score=0.05, at=clock.now + timedelta(seconds=i)))
    records = gw.stream_events(0)
    # 5 motion records interleaved with their care events
    assert [r.seq for r in records] == list(range(1, len(records) + 1))
    assert sum(1 for r in records if r.kind == "motion") == 5

    resumed = gw.stream_events(records[2].seq)
    assert [r.seq for r in resumed] == [r.seq for r in records[3:]]


def test_stream_records_decode_as_wire_or_care_lines(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, device, _ = build_gateway(tmp_path, clock)
    gw.ingest_motion(motion_msg())
    gw.ingest_telemetry(device.telemetry())
    for rec in gw.stream_events(0):
        if rec.kind in ("motion", "telemetry"):
            decode(rec.line)  # wire-protocol line
        else:
            assert '"kind"' in rec.line  # care-event line


def test_status_snapshot(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, device, trial = build_gateway(tmp_path, clock)
    snap = gw.status()
    assert snap["epoch"] == 1
    dev = snap["devices"]["tb-01"]
    assert dev["connected"]
    assert dev["activation_allowed"]
    assert dev["active_stimulus"] == Stimulus.ACTUATED_TADBOT.value

    gw.command_device("tb-01", "activate", mode="begging")
    device.run_for(2.0)
    gw.ingest_telemetry(device.telemetry())
    snap = gw.status()
    assert snap["devices"]["tb-01"]["telemetry"]["mode"] == "begging"
    assert snap["devices"]["tb-01"]["telemetry"]["remaining_s"] <= 75.0
    assert snap["events"]["total"] >= 1
    assert snap["trials"][0]["trial_id"] == trial.trial_id


def test_status_reports_guard_denial(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, _ = build_gateway(tmp_path, clock, stimulus_now=Stimulus.INERT_TADBOT)
    dev = gw.status()["devices"]["tb-01"]
    assert not dev["activation_allowed"]
    assert Stimulus.INERT_TADBOT.value in dev["guard_reason"]


# ---- restart / recovery ----

def test_restart_preserves_logs_and_bumps_epoch(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, trial = build_gateway(tmp_path, clock)
    gw.ingest_motion(motion_msg())
    assert gw.epoch == 1
    gw.close()

    gw2 = Gateway(GatewayConfig(devices={"tb-01": DeviceEntry(pair_id="pair-a")},
                                cameras={"cam-1": "pair-a"},
                                data_dir=tmp_path / "data"),
                  notifier=RecordingNotifier(), clock=clock)
    assert gw2.epoch == 2
    assert gw2.stream_events(0) == []  # fresh sequence in the new epoch
    events = list(read_events(gw2.config.data_dir / f"trial-{trial.trial_id}.log"))
    assert len(events) >= 1  # care events survived
    assert gw2.trial_by_id(trial.trial_id) is not None  # trial store survived


def test_trial_ids_unique(tmp_path):
    clock = ManualClock(datetime(2024, 1, 2, tzinfo=UTC))
    gw, _, trial = build_gateway(tmp_path, clock)
    with pytest.raises(ValueError):
        gw.add_trial(trial)


# ---- config ----

def test_config_from_file_and_env_overrides(tmp_path):
    path = tmp_path / "gateway.json"
    path.write_text("""{
      "listen": "0.0.0.0:9000",
      "webhook_url": "http://hooks.example/x",
      "motion_threshold": 0.05,
      "devices": {"tb-01": {"pair_id": "pair-a", "endpoint": "10.0.0.9:7000"}},
      "cameras": {"cam-1": "pair-a"},
      "data_dir": "/var/lib/tadbot"
    }""")
    config = GatewayConfig.from_file(path)
    assert config.listen == "0.0.0.0:9000"
    assert config.webhook_url == "http://hooks.example/x"
    assert config.motion_threshold == 0.05
    assert config.devices["tb-01"].pair_id == "pair-a"
    assert config.devices["tb-01"].endpoint == "10.0.0.9:7000"
    assert config.cameras == {"cam-1": "pair-a"}

    config.apply_env({
        "GATEWAY_LISTEN": "127.0.0.1:9100",
        "GATEWAY_DEVICE_LISTEN": "127.0.0.1:9101",
        "GATEWAY_WEBHOOK": "http://hooks.example/y",
        "GATEWAY_THRESHOLD": "0.1",
        "GATEWAY_DATA_DIR": str(tmp_path / "d"),
    })
    assert config.listen == "127.0.0.1:9100"
    assert config.device_listen == "127.0.0.1:9101"
    assert config.webhook_url == "http://hooks.example/y"
    assert config.motion_threshold == 0.1
    assert config.data_dir == tmp_path / "d"


def test_config_rejects_bad_threshold():
    with pytest.raises(ValueError):
        GatewayConfig(motion_threshold=1.5)
