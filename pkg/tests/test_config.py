import json

import pytest

from tcam import config
from tcam.errors import ConfigError, FormatError


def test_shipped_scenario_validates():
    sc = config.load_scenario()
    assert sc.method == "h264cd"
    assert sc.rates.motion_interval == 1200
    assert sc.table.egress_per_bit == pytest.approx(112.5e-9)
    assert sc.table.flash_write_per_bit == pytest.approx(110e-12)
    assert sc.table.p_motion_mode == pytest.approx(48.8e-6)
    assert sc.storage.flash_bits == 2_048_000


def test_partial_document_merges():
    sc = config.from_document({"rates": {"p_person": 0.25}})
    assert sc.rates.p_person == 0.25 and sc.rates.p_face == 0.5


@pytest.mark.parametrize("doc,ptr", [
    ({"rates": {"p_person": 2}}, "/rates/p_person"),
    ({"method": "gif"}, "/method"),
    ({"storage": {"flash_bytes": "lots"}}, "/storage/flash_bytes"),
])
def test_schema_error_pointer(doc, ptr):
    with pytest.raises(ConfigError) as e:
        config.from_document(doc)
    assert e.value.pointer == ptr
    assert e.value.exit_code == 7


def test_unknown_radio_mode():
    with pytest.raises(ConfigError) as e:
        config.from_document({"storage": {"radio_mode": "lora"}}).storage
    assert e.value.pointer == "/storage/radio_mode"


def test_bad_json(tmp_path):
    (tmp_path / "c.json").write_text("{nope")
    with pytest.raises(FormatError):
        config.load_scenario(tmp_path / "c.json")


def test_to_json_roundtrip():
    sc = config.load_scenario()
    assert config.from_document(json.loads(sc.to_json())).doc == sc.doc
