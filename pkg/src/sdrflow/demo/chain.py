"""Toy software-radio transceiver built from runtime modules.

Transmitter, channel and receiver live in one process::

    source -> encoder -> modem.modulate -> scrambler -> channel
           -> whitener -> modem.demodulate -> [cleanup loop x2] -> decoder
           -> monitor, sink

The code is a repetition code with majority decoding, the modulation BPSK
(bit 0 -> +1, bit 1 -> -1) and the channel additive white Gaussian noise.
The scrambler and the whitener share a maximal-length LFSR sequence whose
position persists across frames, which makes both sequential-only: they are
the stateful bottleneck tasks that cannot be replicated.

Every random draw is keyed by the master seed and the frame index, so a
sequential run and any pipelined/replicated run produce identical bits.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..graph import Cloneability, Module, Task, bind
from ..sequence import Sequence
from ..switcher import ForLoopControl, Switcher

LFSR_DEGREE = 15


@dataclass
class ChainConfig:
    k: int = 256
    rep: int = 3
    ebn0_db: float = 4.0
    seed: int = 0
    frames: int = 1000
    cleanup_iterations: int = 2
    llr_clip: float = 16.0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("frame size k must be >= 1")
        if self.rep < 1 or self.rep % 2 == 0:
            raise ValueError("repetition factor must be a positive odd integer")
        if self.frames < 0:
            raise ValueError("frame count must be >= 0")
        if self.cleanup_iterations < 1:
            raise ValueError("cleanup loop needs at least one iteration")

    @property
    def n(self) -> int:
        return self.k * self.rep

    @property
    def sigma2(self) -> float:
        """Noise variance per real dimension for unit-energy symbols."""
        if math.isinf(self.ebn0_db) and self.ebn0_db > 0:
            return 0.0
        return 1.0 / (2.0 * self.rep * 10.0 ** (self.ebn0_db / 10.0))


def lfsr_sequence(degree: int = LFSR_DEGREE, state: int = 1) -> np.ndarray:
    """One period of the x^15 + x^14 + 1 maximal-length sequence as +-1 floats."""
    if degree != 15:
        raise ValueError("only the degree-15 register is provided")
    period = (1 << degree) - 1
    bits = np.empty(period, dtype=np.uint8)
    s = state
    for i in range(period):
        fb = ((s >> 14) ^ (s >> 13)) & 1
        bits[i] = fb
        s = ((s << 1) | fb) & period
    seq = (1.0 - 2.0 * bits).astype(np.float32)
    seq.flags.writeable = False
    return seq


# -- modules -------------------------------------------------------------------

class Source(Module):
    """Random information bits, drawn per frame from (seed, frame index)."""

    def __init__(self, k: int, seed: int, name: str = "source"):
        super().__init__(name)
        self.k = k
        self.seed = seed
        self.index = 0
        t = self.create_task("generate", self._generate)
        t.create_output("bits", np.uint8, k)

    def reset(self) -> None:
        self.index = 0

    def _generate(self, bits):
        rng = np.random.default_rng([self.seed, 0x5EED, self.index])
        bits[:] = rng.integers(0, 2, self.k, dtype=np.uint8)
        self.index += 1


class Encoder(Module):
    cloneability = Cloneability.CLONEABLE

    def __init__(self, k: int, rep: int, name: str = "encoder"):
        super().__init__(name)
        self.rep = rep
        t = self.create_task("encode", self._encode)
        t.create_input("bits", np.uint8, k)
        t.create_output("code", np.uint8, k * rep)

    def _encode(self, bits, code):
        code.reshape(-1, self.rep)[:] = bits[:, None]


class Modem(Module):
    """BPSK modulation and LLR demodulation (two tasks, one module)."""

    cloneability = Cloneability.CLONEABLE

    def __init__(self, n: int, sigma2: float, name: str = "modem"):
        super().__init__(name)
        self.llr_scale = 2.0 / sigma2 if sigma2 > 0 else 1.0
        mod = self.create_task("modulate", self._modulate)
        mod.create_input("bits", np.uint8, n)
        mod.create_output("symbols", np.float32, n)
        dem = self.create_task("demodulate", self._demodulate)
        dem.create_input("symbols", np.float32, n)
        dem.create_output("llr", np.float32, n)

    def _modulate(self, bits, symbols):
        np.subtract(1.0, 2.0 * bits, out=symbols, casting="unsafe")

    def _demodulate(self, y, llr):
        np.multiply(y, self.llr_scale, out=llr)


class _LfsrMixer(Module):
    """Multiplies the frame by a persistent LFSR stream (stateful)."""

    cloneability = Cloneability.SEQUENTIAL_ONLY

    def __init__(self, n: int, task_name: str, name: str):
        super().__init__(name)
        self.sequence = lfsr_sequence()
        self.position = 0
        t = self.create_task(task_name, self._mix)
        t.create_input("symbols", np.float32, n)
        t.create_output("symbols_out", np.float32, n)

    def reset(self) -> None:
        self.position = 0

    def _mix(self, x, out):
        period = self.sequence.shape[0]
        idx = (np.arange(x.shape[0]) + self.position) % period
        np.multiply(x, self.sequence[idx], out=out)
        self.position = (self.position + x.shape[0]) % period


class Scrambler(_LfsrMixer):
    def __init__(self, n: int, name: str = "scrambler"):
        super().__init__(n, "scramble", name)


class Whitener(_LfsrMixer):
    def __init__(self, n: int, name: str = "whitener"):
        super().__init__(n, "descramble", name)


class Channel(Module):
    """Additive white Gaussian noise keyed by (seed, frame generation)."""

    cloneability = Cloneability.CLONEABLE

    def __init__(self, n: int, sigma2: float, seed: int, name: str = "channel"):
        super().__init__(name)
        self.sigma = math.sqrt(sigma2)
        self.seed = seed
        t = self.create_task("add_noise", self._add_noise)
        self._in = t.create_input("symbols", np.float32, n)
        t.create_output("noisy", np.float32, n)

    def _add_noise(self, x, y):
        if self.sigma == 0.0:
            y[:] = x
            return
        rng = np.random.default_rng([self.seed, 0xA3C5, self._in.generation])
        rng.standard_normal(x.shape[0], dtype=np.float32, out=y)
        y *= self.sigma
        y += x


class Cleanup(Module):
    """One iteration of LLR clean-up: saturate magnitudes."""

    cloneability = Cloneability.CLONEABLE

    def __init__(self, n: int, clip: float, name: str = "cleanup"):
        super().__init__(name)
        self.clip = clip
        t = self.create_task("refine", self._refine)
        t.create_input("llr", np.float32, n)
        t.create_output("llr_out", np.float32, n)

    def _refine(self, llr, out):
        np.clip(llr, -self.clip, self.clip, out=out)


class Decoder(Module):
    """Majority vote over the repeated hard decisions."""

    cloneability = Cloneability.CLONEABLE

    def __init__(self, k: int, rep: int, name: str = "decoder"):
        super().__init__(name)
        self.rep = rep
        t = self.create_task("decode", self._decode)
        t.create_input("llr", np.float32, k * rep)
        t.create_output("bits", np.uint8, k)

    def _decode(self, llr, bits):
        votes = (llr < 0).reshape(-1, self.rep).sum(axis=1)
        np.greater(votes, self.rep // 2, out=bits, casting="unsafe")


class Monitor(Module):
    """Frame and bit error counters."""

    def __init__(self, k: int, name: str = "monitor"):
        super().__init__(name)
        self.k = k
        self.frames_seen = 0
        self.frame_errors = 0
        self.bit_errors = 0
        t = self.create_task("check", self._check)
        t.create_input("reference", np.uint8, k)
        t.create_input("decoded", np.uint8, k)

    def reset_counters(self) -> None:
        self.frames_seen = self.frame_errors = self.bit_errors = 0

    def _check(self, ref, dec):
        errs = int(np.count_nonzero(ref != dec))
        self.frames_seen += 1
        self.bit_errors += errs
        self.frame_errors += errs > 0

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames_seen if self.frames_seen else 0.0

    @property
    def ber(self) -> float:
        return self.bit_errors / (self.frames_seen * self.k) if self.frames_seen else 0.0


class Sink(Module):
    """Keeps decoded bits and their frame generations."""

    def __init__(self, k: int, name: str = "sink"):
        super().__init__(name)
        self.frames: list[bytes] = []
        self.generations: list[int] = []
        t = self.create_task("store", self._store)
        self._in = t.create_input("bits", np.uint8, k)

    def _store(self, bits):
        self.frames.append(bits.tobytes())
        self.generations.append(self._in.generation)

    def data(self) -> bytes:
        return b"".join(self.frames)


# -- assembly --------------------------------------------------------------------

@dataclass
class Chain:
    cfg: ChainConfig
    modules: dict[str, Module] = field(default_factory=dict)

    def __getitem__(self, key: str) -> Task:
        mod, _, task = key.partition(".")
        return self.modules[mod].tasks[task]

    @property
    def tasks(self) -> list[Task]:
        return [t for m in self.modules.values() for t in m.tasks.values()]

    @property
    def monitor(self) -> Monitor:
        return self.modules["monitor"]

    @property
    def sink(self) -> Sink:
        return self.modules["sink"]

    def sequence(self, **kwargs) -> Sequence:
        return Sequence([self["source.generate"]], **kwargs)


def build_chain(cfg: ChainConfig) -> Chain:
    k, n = cfg.k, cfg.n
    sigma2 = cfg.sigma2
    m: dict[str, Module] = {
        "source": Source(k, cfg.seed),
        "encoder": Encoder(k, cfg.rep),
        "modem": Modem(n, sigma2),
        "scrambler": Scrambler(n),
        "channel": Channel(n, sigma2, cfg.seed),
        "whitener": Whitener(n),
        "loop": Switcher(2, np.float32, n, "loop"),
        "loop_ctrl": ForLoopControl(cfg.cleanup_iterations, np.float32, n, name="loop_ctrl"),
        "cleanup": Cleanup(n, cfg.llr_clip),
        "decoder": Decoder(k, cfg.rep),
        "monitor": Monitor(k),
        "sink": Sink(k),
    }
    src = m["source"]["generate::bits"]
    bind(m["encoder"]["encode::bits"], src)
    bind(m["modem"]["modulate::bits"], m["encoder"]["encode::code"])
    bind(m["scrambler"]["scramble::symbols"], m["modem"]["modulate::symbols"])
    bind(m["channel"]["add_noise::symbols"], m["scrambler"]["scramble::symbols_out"])
    bind(m["whitener"]["descramble::symbols"], m["channel"]["add_noise::noisy"])
    bind(m["modem"]["demodulate::symbols"], m["whitener"]["descramble::symbols_out"])
    sw, ctl = m["loop"], m["loop_ctrl"]
    bind(sw["select::data1"], m["modem"]["demodulate::llr"])
    bind(ctl["iterate::in"], sw["select::data"])
    bind(sw["commute::data"], sw["select::data"])
    bind(sw["commute::ctrl"], ctl["iterate::ctrl"])
    bind(m["cleanup"]["refine::llr"], sw["commute::data0"])
    bind(sw["select::data0"], m["cleanup"]["refine::llr_out"])
    bind(m["decoder"]["decode::llr"], sw["commute::data1"])
    bind(m["monitor"]["check::reference"], src)
    bind(m["monitor"]["check::decoded"], m["decoder"]["decode::bits"])
    bind(m["sink"]["store::bits"], m["decoder"]["decode::bits"])
    return Chain(cfg, m)


def default_plan_dict(workers: int = 1, capacity: int = 1, wait_mode: str = "passive",
                      copy_mode: str = "copyless") -> dict:
    """Four stages; the whitener gets its own single-worker stage."""
    return {
        "entry": "source.generate",
        "capacity": capacity,
        "wait_mode": wait_mode,
        "copy_mode": copy_mode,
        "stages": [
            {"first": ["source.generate"], "last": ["channel.add_noise"]},
            {"first": ["whitener.descramble"], "last": ["whitener.descramble"]},
            {"first": ["modem.demodulate"], "last": ["decoder.decode"], "workers": workers},
            {"first": ["monitor.check", "sink.store"]},
        ],
    }
