import textwrap

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("HOLOKIT_OUT", raising=False)
    return tmp_path


@pytest.fixture
def small_config(workspace):
    # every study, sized for a test run
    path = workspace / "small.yml"
    path.write_text(
        textwrap.dedent(
            """
            connection:
              ladder: [20, 40, 80]
              refine_factor: 4
            frames:
              ladder: [20, 40, 80]
            abelian:
              ladder: [20, 40, 80]
              check_steps: 200
            gauge:
              m_values: [2]
              n_values: [20]
              sequences: 2
            noise:
              mu_levels: [0.5, 0.9]
              rho_start: 1.0e-6
              rho_stop: 1.0e-4
              per_decade: 1
              trials: 4
            correction:
              ladder: [20, 40, 80]
            """
        )
    )
    return path
