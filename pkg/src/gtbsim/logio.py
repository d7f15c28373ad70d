"""Episode log serialization: JSON Lines with a config-echo header.

Serialization is canonical (sorted keys, fixed separators, no timestamps)
so identical (config, seed) produce byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


@dataclass
class EpisodeLog:
    header: dict
    steps: list = field(default_factory=list)
    periods: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, config, seed: int) -> "EpisodeLog":
        return cls(header={
            "type": "header",
            "format": "gtbsim-episode-v1",
            "config": config.to_dict(),
            "config_digest": config.digest(),
            "seed": seed,
        })

    def records(self):
        yield self.header
        # steps and periods interleaved in time order
        by_period_end = {(p["period"] + 1) * self.header["config"]["tax_period"] - 1: p
                         for p in self.periods}
        for step in self.steps:
            yield step
            period = by_period_end.get(step["t"])
            if period is not None:
                yield period
        yield {"type": "summary", **self.summary}

    def to_bytes(self) -> bytes:
        return ("\n".join(canonical(rec) for rec in self.records()) + "\n").encode()

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path) -> "EpisodeLog":
        header = None
        steps, periods, summary = [], [], {}
        with open(path, "rb") as fh:
            for lineno, raw in enumerate(fh, start=1):
                raw = raw.strip()
                if not raw:
                    continue
                try:
                    rec = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise ValueError(f"{path}: line {lineno}: invalid JSON ({exc})")
                kind = rec.get("type")
                if kind == "header":
                    header = rec
                elif kind == "step":
                    steps.append(rec)
                elif kind == "period":
                    periods.append(rec)
                elif kind == "summary":
                    summary = {k: v for k, v in rec.items() if k != "type"}
                else:
                    raise ValueError(f"{path}: line {lineno}: unknown record type {kind!r}")
        if header is None:
            raise ValueError(f"{path}: missing header record")
        expected = header["config"]["horizon"]
        if len(steps) != expected:
            raise ValueError(f"{path}: truncated log: {len(steps)} steps, expected {expected}")
        return cls(header=header, steps=steps, periods=periods, summary=summary)
