import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fmadapt.config import Config, ConfigError, load_config


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_include_splices_and_later_values_win(tmp_path):
    write(tmp_path / "base.conf", "[train]\nsteps = 10\nbatch_size = 4\n")
    p = write(tmp_path / "stage.conf", "include base.conf\n[train]\nsteps = 20\n")
    cfg = load_config(p)
    assert cfg.get("train", "steps", kind=int) == 20
    assert cfg.get("train", "batch_size", kind=int) == 4


def test_include_resolves_relative_to_the_including_file(tmp_path):
    (tmp_path / "shared").mkdir()
    write(tmp_path / "shared" / "a.conf", "include b.conf\n")
    write(tmp_path / "shared" / "b.conf", "[x]\nk = 1\n")
    cfg = load_config(write(tmp_path / "top.conf", "include shared/a.conf\n"))
    assert cfg.get("x", "k") == "1"


def test_missing_include_names_file_and_line(tmp_path):
    p = write(tmp_path / "s.conf", "[a]\nk = 1\ninclude nope.conf\n")
    with pytest.raises(ConfigError) as e:
        load_config(p)
    assert e.value.line == 3 and str(e.value).startswith(f"{p.resolve()}:3:")


def test_include_cycle_is_an_error(tmp_path):
    write(tmp_path / "a.conf", "include b.conf\n")
    write(tmp_path / "b.conf", "include a.conf\n")
    with pytest.raises(ConfigError, match="cycle"):
        load_config(tmp_path / "a.conf")


def test_syntax_error_reports_the_line_in_the_included_file(tmp_path):
    write(tmp_path / "base.conf", "[a]\nk = 1\nthis line is broken\n")
    p = write(tmp_path / "s.conf", "include base.conf\n")
    with pytest.raises(ConfigError) as e:
        load_config(p)
    assert e.value.file.endswith("base.conf") and e.value.line == 3


def test_type_error_points_at_the_key(tmp_path):
    p = write(tmp_path / "s.conf", "[train]\n\nsteps = lots\n")
    cfg = load_config(p)
    with pytest.raises(ConfigError) as e:
        cfg.get("train", "steps", kind=int)
    assert e.value.line == 3


def test_missing_required_key(tmp_path):
    cfg = load_config(write(tmp_path / "s.conf", "[train]\n"))
    with pytest.raises(ConfigError, match="missing required key"):
        cfg.get("train", "steps")
    assert cfg.get("train", "steps", 5, int) == 5


def test_bool_and_list_parsing(tmp_path):
    cfg = load_config(write(tmp_path / "s.conf", "[a]\nflag = yes\nitems = x, y  z\n"))
    assert cfg.get("a", "flag", kind=bool) is True
    assert cfg.get("a", "items", kind=list) == ["x", "y", "z"]


def test_hash_ignores_formatting_order_and_comments(tmp_path):
    a = load_config(write(tmp_path / "a.conf", "[t]\nsteps = 10\nlr = 0.01\n[m]\nk = x\n"))
    b = load_config(write(tmp_path / "b.conf", "# note\n[m]\nk=x\n\n[t]\nlr = 1e-2  # peak\nsteps: 10.0\n"))
    assert a.hash() == b.hash()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_hash_changes_iff_a_value_changes(v1, v2):
    a = Config({"train": {"steps": str(v1)}})
    b = Config({"train": {"steps": str(v2)}})
    assert (a.hash() == b.hash()) == (v1 == v2)


def test_hash_sees_new_keys_and_sections():
    base = Config({"train": {"steps": "1"}})
    assert base.hash() != Config({"train": {"steps": "1", "lr": "1"}}).hash()
    assert base.hash() != Config({"train": {"steps": "1"}, "x": {}}).hash()


def test_override_is_located_as_override(tmp_path):
    cfg = load_config(write(tmp_path / "s.conf", "[a]\nk = 1\n"))
    cfg.set("a", "k", "2")
    assert cfg.get("a", "k") == "2" and cfg.where("a", "k") == ("<override>", 0)
