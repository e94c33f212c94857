from truckmatch import __version__
from truckmatch.manifest import RunManifest, read_manifest, run_timestamp, write_manifest


def test_roundtrip(tmp_path):
    m = RunManifest(
        command="simulate",
        seed=7,
        config={"shipments": 10},
        inputs=["a"],
        outputs=["b", "c"],
    )
    path = write_manifest(m, tmp_path)
    data = read_manifest(path)
    assert data["command"] == "simulate"
    assert data["seed"] == 7
    assert data["config"] == {"shipments": 10}
    assert data["tool_version"] == __version__


def test_timestamp_honors_source_date_epoch(monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    assert run_timestamp() is None
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "12345")
    assert run_timestamp() == 12345
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "not-a-number")
    assert run_timestamp() is None


def test_write_is_deterministic_without_epoch(tmp_path, monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir(), b.mkdir()
    m1 = RunManifest(command="x", seed=1)
    m2 = RunManifest(command="x", seed=1)
    assert write_manifest(m1, a).read_bytes() == write_manifest(m2, b).read_bytes()
