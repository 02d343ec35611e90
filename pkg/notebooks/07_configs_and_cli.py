# %% [markdown]
# # Configs, calibration and the command line
#
# Bundled configs are plain sectioned files. The coupling losses in them come
# from a calibration to the observed visibility and coincidence rate.

# %%
import dataclasses

from timebin import cli
from timebin.config import bundled_path, emit_config, loads, read_config
from timebin.errors import ConfigError
from timebin.montecarlo import calibrate_extra_losses

cfg, opts = read_config(bundled_path("paper_default"))
print(emit_config(cfg, opts)[:400], "...")
assert loads(emit_config(cfg, opts)) == (cfg, opts)

# %%
cal = calibrate_extra_losses(cfg, visibility=0.78, pair_rate_hz=2.0)
print(f"calibrated extra losses: Alice {cal.channel_a.extra_loss_db:.2f} dB, Bob {cal.channel_b.extra_loss_db:.2f} dB")

# 20 kHz spread over the full 1.2 ns slot cannot reach V = 0.78
full_slot = dataclasses.replace(cfg.detectors.a_plus, dark_prob_per_gate=2.4e-5)
strict = cfg.replace(detectors=dataclasses.replace(cfg.detectors, a_plus=full_slot, a_minus=full_slot))
try:
    calibrate_extra_losses(strict, visibility=0.78, pair_rate_hz=2.0)
except ConfigError as exc:
    print("2.4e-5 per slot:", exc)

# %% [markdown]
# The same analyses from the shell: `timebin budget`, `timebin scan`,
# `timebin chsh`, `timebin qkd --events`, `timebin validate`.

# %%
cli.main(["budget", "--out", "runs/budget"])
