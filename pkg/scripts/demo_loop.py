#!/usr/bin/env python3
"""Headless walkthrough of the full control loop on a virtual clock.

Schedules a trial, fast-forwards to its actuated phase, feeds the gateway
a synthetic motion event, issues a begging command, and drives the device
through one complete 75 s burst schedule--all in well under a second of
wall time.
"""

import sys
import tempfile
from datetime import date, datetime, timezone

import numpy as np

from tadbot.analysis import GrayFrame, motion_score
from tadbot.experiment import Stimulus, schedule_trial
from tadbot.gateway import DeviceEntry, Gateway, GatewayConfig
from tadbot.protocol import Motion
from tadbot.simdevice import InProcessLink, SimDevice

UTC = timezone.utc


class ManualClock:
    def __init__(self, start):
        self.now = start

    def __call__(self):
        return self.now


class PrintingNotifier:
    def deliver(self, motion):
        print(f"  -> webhook notified: camera={motion.camera} score={motion.score:.4f}")
        return True


def main() -> int:
    clock = ManualClock(datetime(2024, 1, 1, tzinfo=UTC))
    with tempfile.TemporaryDirectory() as tmp:
        config = GatewayConfig(devices={"tb-01": DeviceEntry(pair_id="pair-a")},
                               cameras={"cam-1": "pair-a"}, data_dir=tmp)
        gw = Gateway(config, notifier=PrintingNotifier(), clock=clock)

        trial = schedule_trial("pair-a", "can-1", date(2024, 1, 1), seed=3,
                               fed_confirmed=True)
        gw.add_trial(trial)
        print(f"trial {trial.trial_id}:")
        for p in trial.phases:
            print(f"  {p.start_date} .. {p.end_date}  {p.stimulus.value}")

        actuated = next(p for p in trial.phases
                        if p.stimulus is Stimulus.ACTUATED_TADBOT)
        clock.now = datetime(actuated.start_date.year, actuated.start_date.month,
                             actuated.start_date.day, 12, tzinfo=UTC)
        print(f"\nclock jumped to {clock.now.date()} (actuated phase)")

        telemetry_lines = []
        device = SimDevice("tb-01",
                           on_telemetry=lambda t: telemetry_lines.append(t))
        gw.register_device_link("tb-01", InProcessLink(device))

        # synthetic camera frames: an 8x8 block moves four pixels
        base = np.full((32, 32), 20.0)
        a, b = base.copy(), base.copy()
        a[8:16, 8:16] = 200.0
        b[8:16, 12:20] = 200.0
        score = motion_score(GrayFrame(32, 32, a.reshape(-1)),
                             GrayFrame(32, 32, b.reshape(-1)))
        print(f"\ncamera frame differencing: score={score:.4f}")
        gw.ingest_motion(Motion(camera="cam-1", score=score, ts=clock.now))

        ack = gw.command_device("tb-01", "activate", mode="begging")
        print(f"begging command ack: ok={ack.ok}")

        transitions = []
        prev = None
        for _ in range(7600):
            sp = device.tick()
            if sp != prev:
                transitions.append((round(device.state.clock_s, 2), sp))
                prev = sp
        print("\nsetpoint transitions over the 75 s schedule (t_s, Hz):")
        for t, sp in transitions:
            print(f"  {t:7.2f}  {sp:g}")
        print(f"\n{len(telemetry_lines)} telemetry snapshots emitted "
              f"(one per simulated second); device mode is now "
              f"{device.state.mode.value}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
