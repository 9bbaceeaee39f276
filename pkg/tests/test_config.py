import pytest

from spsansatz.config import format_config, load_config, parse_config_text, resolve_key
from spsansatz.errors import ConfigError

TEXT = """
[geometry]
kind = chain
L = 8
h_x = 0.5

[ansatz]
M = 4

[schedule]
epochs = 100
"""


def test_typed_access_and_defaults():
    cfg = parse_config_text(TEXT)
    assert cfg.get("geometry", "L") == 8
    assert cfg.get("geometry", "h_x") == 0.5
    assert cfg.get("geometry", "J") == -1.0
    assert cfg.get("ansatz", "M") == (4,)
    assert cfg.section("schedule")["restarts"] == 20


def test_overrides_bare_and_qualified(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text(TEXT)
    cfg = load_config(path, ["M=16", "schedule.epochs=7", "target_rel_error=1e-4"])
    assert cfg.get("ansatz", "M") == (16,)
    assert cfg.get("schedule", "epochs") == 7
    assert cfg.get("schedule", "target_rel_error") == 1e-4
    assert parse_config_text(format_config(cfg)).raw == cfg.raw


@pytest.mark.parametrize("bad", ["[geometry]\nkind = chain\nbogus = 1\n", "[nonsense]\nx = 1\n",
                                 "[geometry]\nL = eight\n", "[schedule]\nepochs = 1.5\n",
                                 "[geometry]\nh_x = nan\n", "not an ini file"])
def test_strict_rejection(tmp_path, bad):
    path = tmp_path / "bad.cfg"
    path.write_text(bad)
    with pytest.raises(ConfigError):
        load_config(path)


def test_error_names_the_key(tmp_path):
    path = tmp_path / "c.cfg"
    path.write_text("[schedule]\nepochs = many\n")
    with pytest.raises(ConfigError, match="schedule.epochs"):
        load_config(path)
    with pytest.raises(ConfigError, match="geometry"):
        load_config(None).get("geometry", "kind")


def test_resolve_key():
    assert resolve_key("M") == ("ansatz", "M")
    assert resolve_key("optimizer.learning_rate") == ("optimizer", "learning_rate")
    for bad in ("nope", "ansatz.nope", "nope.M"):
        with pytest.raises(ConfigError):
            resolve_key(bad)
    with pytest.raises(ConfigError):
        load_config(None, ["M16"])


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/file.cfg")
