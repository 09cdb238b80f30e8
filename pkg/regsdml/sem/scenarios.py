from __future__ import annotations

import abc
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from enum import Enum
from typing import Any
from typing import NamedTuple

import numpy as np
import scipy.linalg
from scipy.special import expit
from scipy.stats import norm

from regsdml.data import Dataset
from regsdml.errors import InvalidArgumentError


logger = logging.getLogger(__name__)


class ScenarioName(Enum):
    INTRO_SEM = "intro_sem"
    FOREST_SEM = "forest_sem"
    STRONG_CONFOUNDING = "strong_confounding"
    WH_NOISE = "wh_noise"
    HW_NOISE = "hw_noise"
    NAIVE_INSTRUMENT_SEM = "naive_instrument_sem"
    LINEAR_GAUSSIAN_ORACLE = "linear_gaussian_oracle"

    @classmethod
    def _missing_(cls, value: object) -> Any:
        if isinstance(value, str):
            text = value.strip().lower().replace("-", "_")
            for member in cls:
                if member.value == text:
                    return member
        return None


@dataclass(frozen=True)
class ScenarioSpec:
    name: ScenarioName
    # None means the scenario's default
    beta0: float | None = None
    chi: float | None = None
    kappa_noise: float | None = None
    alpha_link: float | None = None
    w_scale: float | None = None

    def __post_init__(self) -> None:
        try:
            object.__setattr__(self, "name", ScenarioName(self.name))
        except ValueError:
            raise InvalidArgumentError(f"unknown scenario '{self.name}'") from None

    def parameters(self) -> dict[str, float]:
        scenario = get_scenario(self.name)
        values = dict(scenario.defaults)
        for key in values:
            override = getattr(self, key)
            if override is not None:
                values[key] = float(override)
        return values

    @property
    def true_beta(self) -> float:
        return self.parameters()["beta0"]

    def with_beta0(self, beta0: float) -> ScenarioSpec:
        return replace(self, beta0=beta0)


class SimulatedSample(NamedTuple):
    data: Dataset
    latent: dict[str, np.ndarray]


class _Draws:
    """Standard normal error terms, scaled by ``noise_scale`` and remembered by name."""

    def __init__(self, rng: np.random.Generator, N: int, noise_scale: float,
                 overrides: Mapping[str, Any]) -> None:
        self.rng = rng
        self.N = N
        self.noise_scale = noise_scale
        self.overrides = overrides
        self.recorded: dict[str, np.ndarray] = {}

    def eps(self, name: str, columns: int = 1) -> np.ndarray:
        shape = (self.N,) if columns == 1 else (self.N, columns)
        value = self.noise_scale * self.rng.standard_normal(shape)
        return self.fix(name, value)

    def fix(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self.overrides:
            value = np.broadcast_to(np.asarray(self.overrides[name], dtype=float), np.shape(value)).copy()
        self.recorded[name] = value
        return value


class Scenario(abc.ABC):
    name: ScenarioName
    defaults: dict[str, float] = {}
    has_oracle: bool = False

    @abc.abstractmethod
    def simulate(self, draws: _Draws, p: dict[str, float]) -> dict[str, np.ndarray]:
        """Run the structural equations; returns A, X, W, Y (and latent H)."""

    def conditional_means(self, role: str, W: np.ndarray, p: dict[str, float]) -> np.ndarray:
        raise InvalidArgumentError(f"{self.name.value} has no closed-form conditional means")

    def column_names(self, p: dict[str, float]) -> dict[str, tuple[str, ...]]:
        return {}


class IntroScenario(Scenario):
    name = ScenarioName.INTRO_SEM
    defaults = {"beta0": 1.0, "alpha_link": 1.0, "w_scale": math.pi}
    has_oracle = True
    COS_FREQUENCY = 0.25 * math.pi

    def simulate(self, draws: _Draws, p: dict[str, float]) -> dict[str, np.ndarray]:
        W = draws.fix("W", p["w_scale"] * draws.rng.uniform(-1.0, 1.0, draws.N))
        A = draws.fix("A", 3.0 * np.tanh(2.0 * W) + draws.eps("eps_A"))
        H = draws.fix("H", 2.0 * np.sin(W) + draws.eps("eps_H"))
        X = draws.fix("X", -p["alpha_link"] * np.abs(A) - 2.0 * np.tanh(W) - H + draws.eps("eps_X"))
        Y = draws.fix("Y", p["beta0"] * X + 0.5 * W**2 - 3.0 * np.cos(self.COS_FREQUENCY * H)
                      + draws.eps("eps_Y"))
        return {"A": A, "X": X, "W": W, "Y": Y, "H": H}

    def conditional_means(self, role: str, W: np.ndarray, p: dict[str, float]) -> np.ndarray:
        w = np.asarray(W, dtype=float)[:, 0]
        mean_a = 3.0 * np.tanh(2.0 * w)
        if role == "A":
            return mean_a[:, None]
        # folded normal mean of |A| given W
        mean_abs_a = mean_a * (1.0 - 2.0 * norm.cdf(-mean_a)) + 2.0 * norm.pdf(mean_a)
        mean_x = -p["alpha_link"] * mean_abs_a - 2.0 * np.tanh(w) - 2.0 * np.sin(w)
        if role == "X":
            return mean_x[:, None]
        c = self.COS_FREQUENCY
        mean_cos = np.cos(c * 2.0 * np.sin(w)) * math.exp(-c**2 / 2.0)
        return (p["beta0"] * mean_x + 0.5 * w**2 - 3.0 * mean_cos)[:, None]


class ForestScenario(Scenario):
    name = ScenarioName.FOREST_SEM
    defaults = {"beta0": 1.0, "alpha_link": 1.5}

    def simulate(self, draws: _Draws, p: dict[str, float]) -> dict[str, np.ndarray]:
        A1 = draws.fix("A1", (draws.eps("eps_A1") <= 0.0).astype(float))
        A2 = draws.fix("A2", -4.0 * A1 + draws.eps("eps_A2"))
        W1 = draws.fix("W1", 2.0 * A2 + draws.eps("eps_W1"))
        W2 = draws.fix("W2", draws.eps("eps_W2"))
        H = draws.fix("H", 2.0 * (np.sin(np.pi * W1) * np.tanh(W2) >= 0.0) + draws.eps("eps_H"))
        X = draws.fix("X", p["alpha_link"] * A1 - 0.5 * A2 + np.tanh(H)
                      - 2.0 * (W1 >= 0.0) * (W2 <= 0.0) + draws.eps("eps_X"))
        Y = draws.fix("Y", p["beta0"] * X + (W2 <= 0.0) + np.sin(np.pi * H) + draws.eps("eps_Y"))
        return {"A": np.column_stack([A1, A2]), "X": X, "W": np.column_stack([W1, W2]), "Y": Y, "H": H}

    def column_names(self, p: dict[str, float]) -> dict[str, tuple[str, ...]]:
        return {"a_names": ("A1", "A2"), "w_names": ("W1", "W2")}


class StrongConfoundingScenario(Scenario):
    name = ScenarioName.STRONG_CONFOUNDING
    defaults = {"beta0": 0.0, "chi": 15.0}
    has_oracle = True

    def simulate(self, draws: _Draws, p: dict[str, float]) -> dict[str, np.ndarray]:
        A = draws.fix("A", draws.eps("eps_A"))
        W = draws.fix("W", draws.eps("eps_W"))
        H = draws.fix("H", draws.eps("eps_H"))
        X = draws.fix("X", A + W + p["chi"] * H + 0.25 * draws.eps("eps_X"))
        Y = draws.fix("Y", p["beta0"] * X + W + H + 0.25 * draws.eps("eps_Y"))
        return {"A": A, "X": X, "W": W, "Y": Y, "H": H}

    def conditional_means(self, role: str, W: np.ndarray, p: dict[str, float]) -> np.ndarray:
        w = np.asarray(W, dtype=float)[:, :1]
        return {"A": np.zeros_like(w), "X": w, "Y": (p["beta0"] + 1.0) * w}[role]


class WHNoiseScenario(Scenario):
    name = ScenarioName.WH_NOISE
    defaults = {"beta0": 0.0, "kappa_noise": 2.0}
    has_oracle = True

    def simulate(self, draws: _Draws, p: dict[str, float]) -> dict[str, np.ndarray]:
        A = draws.fix("A", draws.eps("eps_A"))
        W = draws.fix("W", draws.eps("eps_W"))
        H = draws.fix("H", W + p["kappa_noise"] * draws.eps("eps_H"))
        X = draws.fix("X", 0.5 * A + 3.0 * np.tanh(2.0 * W) + 1.5 * H + 0.25 * draws.eps("eps_X"))
        Y = draws.fix("Y", p["beta0"] * X - np.tanh(W) + H + 0.25 * draws.eps("eps_Y"))
        return {"A": A, "X": X, "W": W, "Y": Y, "H": H}

    def conditional_means(self, role: str, W: np.ndarray, p: dict[str, float]) -> np.ndarray:
        w = np.asarray(W, dtype=float)[:, :1]
        mean_x = 3.0 * np.tanh(2.0 * w) + 1.5 * w
        return {"A": np.zeros_like(w), "X": mean_x, "Y": p["beta0"] * mean_x - np.tanh(w) + w}[role]


class HWNoiseScenario(Scenario):
    name = ScenarioName.HW_NOISE
    defaults = {"beta0": 0.0, "kappa_noise": 1.0}

    def simulate(self, draws: _Draws, p: dict[str, float]) -> dict[str, np.ndarray]:
        H = draws.fix("H", draws.eps("eps_H"))
        W = draws.fix("W", 2.0 * H + p["kappa_noise"] * draws.eps("eps_W"))
        A = draws.fix("A", np.exp(-0.5 * W) + 0.5 * draws.eps("eps_A"))
        X = draws.fix("X", -A - 0.1 * W**3 - 0.2 * W**2 + 0.4 * W + 7.0 * expit(4.0 * H)
                      + 0.25 * draws.eps("eps_X"))
        Y = draws.fix("Y", p["beta0"] * X + 0.5 * W + 0.5 * H + draws.eps("eps_Y"))
        return {"A": A, "X": X, "W": W, "Y": Y, "H": H}


class NaiveInstrumentScenario(Scenario):
    name = ScenarioName.NAIVE_INSTRUMENT_SEM
    defaults = {"beta0": 1.0}
    has_oracle = True
    V = 20
    CORRELATION = 0.7

    @classmethod
    def mixing_matrix(cls) -> np.ndarray:
        toeplitz = scipy.linalg.toeplitz(cls.CORRELATION ** np.arange(cls.V))
        return scipy.linalg.cholesky(toeplitz, lower=False)

    def simulate(self, draws: _Draws, p: dict[str, float]) -> dict[str, np.ndarray]:
        H = draws.fix("H", draws.eps("eps_H"))
        W = draws.fix("W", draws.eps("eps_W", self.V) @ self.mixing_matrix())
        A = draws.fix("A", expit(W[:, 0]) + W[:, 1] + W[:, 2] + draws.eps("eps_A"))
        X = draws.fix("X", 2.0 * A + W[:, 0] + 0.25 * expit(W[:, 2]) + H + draws.eps("eps_X"))
        Y = draws.fix("Y", p["beta0"] * X + expit(W[:, 0]) + 0.25 * W[:, 2] + H + draws.eps("eps_Y"))
        return {"A": A, "X": X, "W": W, "Y": Y, "H": H}

    def conditional_means(self, role: str, W: np.ndarray, p: dict[str, float]) -> np.ndarray:
        W = np.asarray(W, dtype=float)
        mean_a = expit(W[:, 0]) + W[:, 1] + W[:, 2]
        mean_x = 2.0 * mean_a + W[:, 0] + 0.25 * expit(W[:, 2])
        mean_y = p["beta0"] * mean_x + expit(W[:, 0]) + 0.25 * W[:, 2]
        return {"A": mean_a, "X": mean_x, "Y": mean_y}[role][:, None]


class LinearGaussianScenario(Scenario):
    name = ScenarioName.LINEAR_GAUSSIAN_ORACLE
    defaults = {"beta0": 1.0}
    has_oracle = True

    def simulate(self, draws: _Draws, p: dict[str, float]) -> dict[str, np.ndarray]:
        W = draws.fix("W", draws.eps("eps_W"))
        H = draws.fix("H", draws.eps("eps_H"))
        A = draws.fix("A", 1.0 + W + draws.eps("eps_A"))
        X = draws.fix("X", A + W + H + draws.eps("eps_X"))
        Y = draws.fix("Y", p["beta0"] * X + W + H + draws.eps("eps_Y"))
        return {"A": A, "X": X, "W": W, "Y": Y, "H": H}

    def conditional_means(self, role: str, W: np.ndarray, p: dict[str, float]) -> np.ndarray:
        w = np.asarray(W, dtype=float)[:, :1]
        mean_x = 1.0 + 2.0 * w
        return {"A": 1.0 + w, "X": mean_x, "Y": p["beta0"] * mean_x + w}[role]


SCENARIOS: dict[ScenarioName, Scenario] = {
    scenario.name: scenario for scenario in (
        IntroScenario(),
        ForestScenario(),
        StrongConfoundingScenario(),
        WHNoiseScenario(),
        HWNoiseScenario(),
        NaiveInstrumentScenario(),
        LinearGaussianScenario(),
    )
}


def get_scenario(name: ScenarioName | str) -> Scenario:
    return SCENARIOS[ScenarioName(name)]


def generate(spec: ScenarioSpec, N: int, rng: np.random.Generator, *, debug: bool = False,
             noise_scale: float = 1.0,
             overrides: Mapping[str, Any] | None = None) -> Dataset | SimulatedSample:
    """Draw N observations from a scenario.

    ``noise_scale`` multiplies every error term and ``overrides`` pins named
    variables (``W``, ``eps_A``, ...) to fixed values. With ``debug`` the
    latent confounder and all error draws are returned next to the data.
    """
    if N < 1:
        raise InvalidArgumentError(f"N must be positive, got {N}")
    scenario = get_scenario(spec.name)
    p = spec.parameters()
    draws = _Draws(rng, N, noise_scale, overrides or {})
    values = scenario.simulate(draws, p)
    data = Dataset(A=values["A"], X=values["X"], W=values["W"], Y=values["Y"], **scenario.column_names(p))
    if debug:
        return SimulatedSample(data=data, latent=dict(draws.recorded))
    return data


@dataclass(frozen=True)
class ScenarioOracle:
    """Callable handing the scenario's true conditional means to the oracle learner."""
    spec: ScenarioSpec
    parameters: dict[str, float] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not get_scenario(self.spec.name).has_oracle:
            raise InvalidArgumentError(f"{self.spec.name.value} has no closed-form conditional means")
        object.__setattr__(self, "parameters", self.spec.parameters())

    def __call__(self, role: str, W: np.ndarray) -> np.ndarray:
        return get_scenario(self.spec.name).conditional_means(role, W, self.parameters)


def conditional_means(spec: ScenarioSpec, role: str, W: np.ndarray) -> np.ndarray:
    return ScenarioOracle(spec)(role, W)
