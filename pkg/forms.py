"""Run configuration: a `key = value` file validated by a WTForms form."""

import os
from dataclasses import dataclass, fields

from werkzeug.datastructures import MultiDict
from wtforms import FloatField, Form, IntegerField, SelectField, StringField
from wtforms.validators import NumberRange, ValidationError

from errors import ConfigError, InvariantViolation
from models import CondenserConfig, Vocabulary
from schedule import VARIANCE_MODES, build_schedule, validate
from semantics import DEFAULT_VOCABULARY

SEED_ENV = "SEECLEAR_SEED"


def non_empty_vocabulary(form, field):
    try:
        Vocabulary.parse(field.data or "")
    except ValueError as exc:
        raise ValidationError(str(exc))


class RunConfigForm(Form):
    """Every run-config key with its default and allowed range."""

    steps = IntegerField("steps", default=15, validators=[NumberRange(min=2)])
    kappa = FloatField("kappa", default=1.0, validators=[NumberRange(min=0)])
    sigma2_b = FloatField("sigma2_b", default=2.0, validators=[NumberRange(min=0)])
    eta_first = FloatField("eta_first", default=0.001, validators=[NumberRange(min=0, max=1)])
    eta_last = FloatField("eta_last", default=0.999, validators=[NumberRange(min=0, max=1)])
    patch_size = IntegerField("patch_size", default=8, validators=[NumberRange(min=1)])
    variance_mode = SelectField("variance_mode", default="consistent",
                                choices=[(mode, mode) for mode in VARIANCE_MODES])
    seed = IntegerField("seed", default=0, validators=[NumberRange(min=0)])

    clip_length = IntegerField("clip_length", default=5, validators=[NumberRange(min=1)])
    upscale = IntegerField("upscale", default=4, validators=[NumberRange(min=2)])
    dwt_levels = IntegerField("dwt_levels", default=2, validators=[NumberRange(min=1)])
    base_channels = IntegerField("base_channels", default=16, validators=[NumberRange(min=1)])
    token_dim = IntegerField("token_dim", default=32, validators=[NumberRange(min=1)])
    top_k = IntegerField("top_k", default=8, validators=[NumberRange(min=1)])
    seg_channels = IntegerField("seg_channels", default=16, validators=[NumberRange(min=1)])
    window = IntegerField("window", default=4, validators=[NumberRange(min=1)])
    heads = IntegerField("heads", default=1, validators=[NumberRange(min=1)])
    groups = IntegerField("groups", default=4, validators=[NumberRange(min=1)])
    bank_grid = IntegerField("bank_grid", default=8, validators=[NumberRange(min=1)])
    gate_mode = SelectField("gate_mode", default="max", choices=[("max", "max"), ("mean", "mean")])
    softmax_axis = SelectField("softmax_axis", default="memory",
                               choices=[("memory", "memory"), ("token", "token")])
    vocabulary = StringField("vocabulary", default=DEFAULT_VOCABULARY, validators=[non_empty_vocabulary])

    ihdm_sigma_max = FloatField("ihdm_sigma_max", default=20.0, validators=[NumberRange(min=0)])
    charbonnier_eps = FloatField("charbonnier_eps", default=1e-3, validators=[NumberRange(min=1e-12)])


@dataclass(frozen=True)
class RunConfig:
    steps: int = 15
    kappa: float = 1.0
    sigma2_b: float = 2.0
    eta_first: float = 0.001
    eta_last: float = 0.999
    patch_size: int = 8
    variance_mode: str = "consistent"
    seed: int = 0
    clip_length: int = 5
    upscale: int = 4
    dwt_levels: int = 2
    base_channels: int = 16
    token_dim: int = 32
    top_k: int = 8
    seg_channels: int = 16
    window: int = 4
    heads: int = 1
    groups: int = 4
    bank_grid: int = 8
    gate_mode: str = "max"
    softmax_axis: str = "memory"
    vocabulary: str = DEFAULT_VOCABULARY
    ihdm_sigma_max: float = 20.0
    charbonnier_eps: float = 1e-3

    def schedule(self):
        """Build and validate the diffusion schedule this config describes."""

        try:
            sched = build_schedule(self.steps, self.kappa, self.sigma2_b, self.eta_first, self.eta_last,
                                   self.patch_size, self.variance_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

        problems = validate(sched)
        if problems:
            raise InvariantViolation(problems)
        return sched

    def condenser_config(self):
        cfg = CondenserConfig(
            base_channels=self.base_channels,
            window=self.window,
            clip_length=self.clip_length,
            upscale=self.upscale,
            dwt_levels=self.dwt_levels,
            token_dim=self.token_dim,
            top_k=self.top_k,
            seg_channels=self.seg_channels,
            heads=self.heads,
            groups=self.groups,
            bank_grid=self.bank_grid,
            gate_mode=self.gate_mode,
            softmax_axis=self.softmax_axis,
        )
        problems = cfg.violations()
        if problems:
            raise ConfigError("; ".join(problems))
        return cfg

    def vocab(self):
        return Vocabulary.parse(self.vocabulary)


def parse_config_text(text):
    """`key = value` lines into a MultiDict; `#` starts a comment."""

    data = MultiDict()
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"line {number}: expected 'key = value', got {line!r}")
        if key in data:
            raise ConfigError(f"line {number}: duplicate key {key!r}")
        data.add(key, value.strip())
    return data


def load_run_config(path=None, text=None):
    """Read, validate and freeze a run config; missing keys take defaults.

    SEECLEAR_SEED in the environment overrides the seed.
    """

    if path is not None:
        try:
            with open(path) as f:
                text = f.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc

    data = parse_config_text(text or "")
    form = RunConfigForm(formdata=data)
    unknown = [key for key in data if key not in form]
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")

    if not form.validate():
        messages = [f"{name}: {'; '.join(errs)}" for name, errs in form.errors.items()]
        raise ConfigError("invalid config: " + ", ".join(messages))

    values = {f.name: form[f.name].data for f in fields(RunConfig)}
    seed = os.environ.get(SEED_ENV)
    if seed is not None:
        try:
            values["seed"] = int(seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV} must be an integer, got {seed!r}") from exc
        if values["seed"] < 0:
            raise ConfigError(f"{SEED_ENV} must be non-negative, got {seed}")

    config = RunConfig(**values)
    config.schedule()
    return config


def write_run_config(path, config):
    """Serialize a RunConfig in the format load_run_config reads."""

    with open(path, "w") as f:
        for field in fields(RunConfig):
            f.write(f"{field.name} = {getattr(config, field.name)!s}\n")
