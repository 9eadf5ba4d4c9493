import hashlib
import math
import os
import sys

from pathlib import Path

import yaml

from .errors import UsageError


LADDER = (20, 40, 80, 160, 320, 640)
NOISE_KINDS = ("complex", "real")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Base:
    def __str__(self):
        return str([{i: f"{self.__dict__[i]}"} for i in self.__dict__])

    def to_dict(self):
        return {
            key: list(value) if isinstance(value, tuple) else value
            for key, value in sorted(self.__dict__.items())
        }

    def assign(self, name, values):
        if not isinstance(values, dict):
            raise UsageError(f"config section {name!r} must be a mapping")

        for key, value in values.items():
            if key not in self.__dict__:
                raise UsageError(f"unknown config key {name}.{key}")

            setattr(self, key, _coerce(self.__dict__[key], value, f"{name}.{key}"))


def _coerce(default, value, name):
    try:
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError(f"expected true/false, got {value!r}")
            return value

        if isinstance(default, int):
            return int(value)

        if isinstance(default, float):
            return float(value)

        if isinstance(default, tuple):
            kind = type(default[0]) if default else float
            return tuple(kind(v) for v in value)

        if default is None or isinstance(default, str):
            return None if value is None else str(value)

    except (TypeError, ValueError) as err:
        raise UsageError(f"invalid value for {name}: {err}") from err

    return value


# default configs, overide as needed
class Config(Base):
    class Tolerances(Base):
        def __init__(self):
            self.frame = 1e-10
            self.singular = 1e-12
            self.unitary = 1e-8
            self.gate = 1e-8

    class Connection(Base):
        def __init__(self):
            self.amplitudes = (0.7, 0.4, 0.2)
            self.interval = (0.0, 2.0 * math.pi)
            self.ladder = LADDER
            self.refine_factor = 16
            self.extrapolate = True

    class Frames(Base):
        def __init__(self):
            self.theta0 = 0.7
            self.ladder = LADDER

    class Abelian(Base):
        def __init__(self):
            self.theta0 = 0.7
            self.ladder = LADDER
            self.check_steps = 10_000

    class Gauge(Base):
        def __init__(self):
            self.m_values = (2, 3)
            self.n_values = (20, 80, 200)
            self.sequences = 20

    class Noise(Base):
        def __init__(self):
            self.theta0 = 0.7
            self.baseline_steps = 80
            self.mu_levels = (0.3, 0.5, 0.7, 0.9, 0.99)
            self.rho_start = 1e-6
            self.rho_stop = 1e-2
            self.per_decade = 5
            self.trials = 64
            self.kind = "real"
            self.fixed_eta = 1e-6

    class Correction(Base):
        def __init__(self):
            self.ladder = LADDER

    class Reconstruct(Base):
        def __init__(self):
            self.theta0 = 0.7
            self.steps = 80
            self.rank = 2
            self.method = "qr"
            self.convention = "left"

    class Process(Base):
        def __init__(self):
            self.nice = 0
            self.workers = 1

    class Logging(Base):
        def __init__(self):
            self.filename = "holokit.log"
            self.format = "%(asctime)s | %(levelname)s in %(module)s: %(message)s"
            self.level = "INFO"

    class SQLite(Base):
        def __init__(self):
            self.echo = False
            self.uri = None

    class Output(Base):
        def __init__(self):
            self.directory = "output"

    # sections that never change a report
    AMBIENT = ("process", "logging", "sqlite", "output")

    def __init__(self):
        self.filename = "config.yml"

        self.tolerances = self.Tolerances()
        self.connection = self.Connection()
        self.frames = self.Frames()
        self.abelian = self.Abelian()
        self.gauge = self.Gauge()
        self.noise = self.Noise()
        self.correction = self.Correction()
        self.reconstruct = self.Reconstruct()
        self.process = self.Process()
        self.logging = self.Logging()
        self.sqlite = self.SQLite()
        self.output = self.Output()

    def sections(self):
        return {
            key: value for key, value in self.__dict__.items() if isinstance(value, Base)
        }

    # override default configs
    def load(self, filename=None):
        file = Path(filename or self.filename)

        if not file.exists():
            print(f"config file {file} not found, using defaults.", file=sys.stderr)
            return None

        sha256 = hashlib.sha256()
        with file.open("rb") as f:
            for chunk in iter(lambda: f.read(4096), b""):
                sha256.update(chunk)

        try:
            with file.open("r") as f:
                configs = yaml.load(f, Loader=yaml.loader.SafeLoader) or {}

        except yaml.YAMLError as err:
            raise UsageError(f"config file {file} is not valid YAML: {err}") from err

        if not isinstance(configs, dict):
            raise UsageError(f"config file {file} must hold a mapping of sections")

        sections = self.sections()
        for name, values in configs.items():
            if name not in sections:
                raise UsageError(f"unknown config section {name!r}")

            sections[name].assign(name, values or {})

        self.filename = str(file)
        return sha256.hexdigest()

    def apply_environment(self, environ=None):
        environ = os.environ if environ is None else environ

        if environ.get("HOLOKIT_OUT"):
            self.output.directory = environ["HOLOKIT_OUT"]

    def validate(self):
        for name, value in self.tolerances.__dict__.items():
            if not value > 0.0:
                raise UsageError(f"tolerance {name} must be positive, got {value}")

        for name in ("connection", "frames", "abelian", "correction"):
            ladder = getattr(self, name).ladder
            if not ladder or min(ladder) < 3:
                raise UsageError(f"{name}.ladder needs partition sizes >= 3, got {list(ladder)}")

        interval = self.connection.interval
        if len(interval) != 2 or not interval[1] > interval[0]:
            raise UsageError("connection.interval must be [start, end] with end > start")

        if len(self.connection.amplitudes) != 3:
            raise UsageError("connection.amplitudes needs exactly three values")

        if self.connection.refine_factor < 1:
            raise UsageError("connection.refine_factor must be >= 1")

        for name in ("frames", "noise", "reconstruct"):
            theta0 = getattr(self, name).theta0
            if not 0.0 < theta0 < math.pi:
                raise UsageError(f"{name}.theta0 must lie in (0, pi), got {theta0}")

        if not 0.0 <= self.abelian.theta0 <= math.pi:
            raise UsageError(f"abelian.theta0 must lie in [0, pi], got {self.abelian.theta0}")

        if not self.gauge.m_values or min(self.gauge.m_values) < 1:
            raise UsageError("gauge.m_values must be positive ranks")

        if not self.gauge.n_values or min(self.gauge.n_values) < 3:
            raise UsageError("gauge.n_values must be partition sizes >= 3")

        if self.gauge.sequences < 1:
            raise UsageError("gauge.sequences must be >= 1")

        noise = self.noise
        if not noise.mu_levels or any(not 0.0 < mu <= 1.0 for mu in noise.mu_levels):
            raise UsageError(f"noise.mu_levels must lie in (0, 1], got {list(noise.mu_levels)}")

        if noise.trials < 1:
            raise UsageError(f"noise.trials must be >= 1, got {noise.trials}")

        if noise.kind not in NOISE_KINDS:
            raise UsageError(f"noise.kind must be one of {NOISE_KINDS}, got {noise.kind!r}")

        if not 0.0 < noise.rho_start < noise.rho_stop or noise.per_decade < 1:
            raise UsageError("noise rho grid needs 0 < rho_start < rho_stop and per_decade >= 1")

        if noise.fixed_eta <= 0.0 or noise.baseline_steps < 3:
            raise UsageError("noise.fixed_eta must be positive and baseline_steps >= 3")

        if self.reconstruct.rank < 1 or self.reconstruct.steps < 3:
            raise UsageError("reconstruct.rank must be >= 1 and reconstruct.steps >= 3")

        if self.reconstruct.method not in ("qr", "svd"):
            raise UsageError(f"reconstruct.method must be qr or svd, got {self.reconstruct.method!r}")

        if self.reconstruct.convention not in ("left", "right"):
            raise UsageError(
                f"reconstruct.convention must be left or right, got {self.reconstruct.convention!r}"
            )

        if str(self.logging.level).upper() not in LOG_LEVELS:
            raise UsageError(f"logging.level must be one of {LOG_LEVELS}, got {self.logging.level!r}")

        if self.process.workers < 1:
            raise UsageError(f"process.workers must be >= 1, got {self.process.workers}")

    def to_dict(self):
        return {
            name: section.to_dict()
            for name, section in sorted(self.sections().items())
            if name not in self.AMBIENT
        }

    @property
    def output_path(self):
        return Path(self.output.directory)

    @property
    def sqlite_uri(self):
        if self.sqlite.uri:
            return self.sqlite.uri

        return f"sqlite:///{(self.output_path / 'holokit.sqlite').as_posix()}"
