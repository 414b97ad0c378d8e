"""Pipeline configuration with the chain's default constants.

The config file is line-oriented ``key = value`` text; ``#`` starts a
comment.  Lists are comma-separated.  Every default below reproduces the
sensing chain's published operating point, so a run without a config file
or flags uses the canonical parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .sensing import ToneConfig


@dataclass
class PipelineConfig:
    # tone plan
    f0: float = 17250.0
    delta_f: float = 750.0
    n_tones: int = 8
    fs: float = 48000.0
    # band-split filters
    lowpass_cutoff: float = 8000.0
    highpass_cutoff: float = 16000.0
    filter_order: int = 8
    passband_ripple_db: float = 0.5
    stopband_atten_db: float = 60.0
    # ultrasound STFT
    ultra_n_fft: int = 4096
    ultra_win: int = 4080
    ultra_hop: int = 240
    window: str = "hann"
    # Mel chain (16 kHz)
    mel_n_fft: int = 1024
    mel_win: int = 400
    mel_hop: int = 80
    n_mels: int = 128
    mel_fmin: float = 0.0
    mel_fmax: float = 8000.0
    # loss hyperparameters
    tau: float = 0.07
    lam: float = 0.5
    alpha: float = 0.5
    # dataset protocol
    snr_grid: tuple = (-10.0, -5.0, 0.0, 5.0, 10.0, 15.0)
    noises_per_clean: int = 20
    test_fraction: float = 0.2
    seed: int = 0
    # physics
    sound_speed: float = 340.0

    def tone_config(self) -> ToneConfig:
        return ToneConfig(self.f0, self.delta_f, self.n_tones, self.fs)

    def validate(self) -> None:
        self.tone_config()  # checks the tone plan invariants
        if not 0 < self.lowpass_cutoff < self.fs / 2:
            raise ValueError("lowpass_cutoff must lie below Nyquist")
        if not 0 < self.highpass_cutoff < self.fs / 2:
            raise ValueError("highpass_cutoff must lie below Nyquist")
        if self.ultra_win > self.ultra_n_fft or self.mel_win > self.mel_n_fft:
            raise ValueError("window length must not exceed FFT size")
        if self.ultra_hop < 1 or self.mel_hop < 1:
            raise ValueError("hops must be at least 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if not 0 <= self.lam <= 1:
            raise ValueError("lam must lie in [0, 1]")
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must lie in [0, 1]")
        if not self.snr_grid:
            raise ValueError("snr_grid must be nonempty")
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            val = getattr(self, f.name)
            if isinstance(val, tuple):
                val = ", ".join(f"{v:g}" for v in val)
            lines.append(f"{f.name} = {val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        cfg = cls()
        types = {f.name: f.type for f in fields(cls)}
        for ln, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{ln}: expected 'key = value'")
            key, val = (part.strip() for part in line.split("=", 1))
            if key not in types:
                raise ValueError(f"{path}:{ln}: unknown key {key!r}")
            setattr(cfg, key, _parse_value(key, val, getattr(cfg, key)))
        cfg.validate()
        return cfg


def _parse_value(key: str, text: str, default):
    if isinstance(default, tuple):
        return tuple(float(v) for v in text.split(","))
    if isinstance(default, bool):
        return text.lower() in ("1", "true", "yes")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text
