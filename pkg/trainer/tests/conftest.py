import subprocess
import sys
from pathlib import Path

import pytest

REPO_ROOT = Path(__file__).resolve().parents[2]
MAPS = REPO_ROOT / "maps"
ENGINE = [sys.executable, "-m", "lmapf"]


def run_engine(args: list[str]) -> subprocess.CompletedProcess:
    result = subprocess.run(ENGINE + args, capture_output=True, text=True, cwd=REPO_ROOT)
    assert result.returncode == 0, f"engine failed: {result.stderr}"
    return result


def collect_dataset(out_path, map_name="random16.map", agents=8, steps=20, seed=5,
                    window=3, iters=8, weights=None) -> Path:
    args = ["collect", "--map", str(MAPS / map_name), "--agents", str(agents),
            "--steps", str(steps), "--seed", str(seed), "--window", str(window),
            "--iters", str(iters), "--out", str(out_path)]
    if weights:
        args += ["--weights", str(weights)]
    run_engine(args)
    return Path(out_path)


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "small.sild"
    return collect_dataset(path, agents=8, steps=20, seed=5)
