import pytest
from hypothesis import given, settings, strategies as st

from d2t.mr import (
    DelexResult,
    Example,
    LexicalizationError,
    LinearizationConfig,
    MeaningRepresentation,
    MrSyntaxError,
    SlotSchema,
    SurfaceFormTable,
    UnknownSlotError,
    delexicalize,
    format_mr,
    identity_selector,
    lexicalize,
    linearize,
    linearize_text,
    load_surface_forms,
    normalize,
    parse_mr,
    parse_linearized,
    recorded_selector,
)

SCHEMA = SlotSchema.default()
CFG = LinearizationConfig()


class TestParseMr:
    def test_basic(self):
        mr = parse_mr("inform(name=Kočár z Vídně,food=German)")
        assert mr.act == "inform"
        assert mr.slots == (("name", "Kočár z Vídně"), ("food", "German"))

    def test_empty_slots(self):
        assert parse_mr("inform()") == MeaningRepresentation("inform", ())

    def test_quoted_value_with_comma(self):
        mr = parse_mr('inform(price="between 180 and 730 Kč")')
        assert mr.slots == (("price", "between 180 and 730 Kč"),)

    def test_syntax_error_reports_position(self):
        with pytest.raises(MrSyntaxError) as exc:
            parse_mr("inform(name=")
        assert exc.value.position > 0

    @pytest.mark.parametrize("bad", ["", "inform", "inform(name)", "inform(=x)", "inform(a=b))", "inform(a=b"])
    def test_rejects_malformed(self, bad):
        with pytest.raises(MrSyntaxError):
            parse_mr(bad)

    def test_unknown_slot_strict_vs_open(self):
        with pytest.raises(UnknownSlotError):
            parse_mr("inform(color=red)", schema=SCHEMA, strict=True)
        mr = parse_mr("inform(color=red)", schema=SCHEMA, strict=False)
        assert mr.slots == (("color", "red"),)

    def test_duplicate_keys_rejected(self):
        with pytest.raises(ValueError):
            parse_mr("inform(name=A,name=B)")


class TestLinearize:
    def test_single_slot(self):
        mr = MeaningRepresentation("inform", (("good_for_meal", "dinner"),))
        assert linearize(mr, CFG) == "[GENERATE] <2cs> inform good_for_meal = dinner"

    def test_two_slots(self):
        mr = MeaningRepresentation(
            "inform", (("name", "Pivo & Basilico"), ("phone", "250625609"))
        )
        assert (
            linearize(mr, CFG)
            == "[GENERATE] <2cs> inform name = Pivo & Basilico phone = 250625609"
        )

    def test_translation_passthrough(self):
        cfg = LinearizationConfig(task_token="[TRANSLATE]", lang_token="<2cs>")
        assert linearize_text("hello", cfg) == "[TRANSLATE] <2cs> hello"


slot_value = st.text(
    alphabet=st.characters(whitelist_categories=("Lu", "Ll", "Nd"), max_codepoint=0x2FF),
    min_size=1,
    max_size=12,
).filter(lambda v: v.strip() == v and v)


@st.composite
def mrs(draw):
    keys = draw(
        st.lists(st.sampled_from(SCHEMA.keys()), min_size=0, max_size=6, unique=True)
    )
    slots = tuple((k, draw(slot_value)) for k in keys)
    return MeaningRepresentation("inform", slots)


class TestRoundTrip:
    @given(mrs())
    @settings(max_examples=200)
    def test_linearize_parse_roundtrip(self, mr):
        assert parse_linearized(linearize(mr, CFG), CFG, SCHEMA) == mr

    @given(mrs())
    @settings(max_examples=100)
    def test_notation_roundtrip(self, mr):
        assert parse_mr(format_mr(mr)) == mr

    @given(mrs(), mrs())
    @settings(max_examples=100)
    def test_linearize_injective(self, a, b):
        if a != b:
            assert linearize(a, CFG) != linearize(b, CFG)


class TestDelexicalize:
    TABLE = SurfaceFormTable.from_dict(
        {"Pivo & Basilico": {"Pivu & Basilicu", "Pivem & Basilicem"}}
    )

    def test_inflected_match(self):
        mr = MeaningRepresentation(
            "inform", (("name", "Pivo & Basilico"), ("phone", "250625609"))
        )
        res = delexicalize(mr, "Pivu & Basilicu lze volat na 250625609", self.TABLE)
        assert res.text == "X-name lze volat na X-phone"
        assert res.fills == {"X-name": "Pivu & Basilicu", "X-phone": "250625609"}
        assert res.unmatched == ()

    def test_kids_allowed_never_replaced(self):
        mr = MeaningRepresentation("inform", (("kids_allowed", "Yes"),))
        res = delexicalize(mr, "Yes children are welcome", self.TABLE)
        assert res.text == "Yes children are welcome"
        assert res.fills == {}

    def test_no_match_reported(self):
        mr = MeaningRepresentation("inform", (("food", "German"),))
        res = delexicalize(mr, "something unrelated", self.TABLE)
        assert res.text == "something unrelated"
        assert res.unmatched == ("food",)

    def test_longest_match_first(self):
        table = SurfaceFormTable.from_dict({"Kaprova 38": set()})
        mr = MeaningRepresentation(
            "inform", (("address", "Kaprova 38"), ("count", "3"))
        )
        res = delexicalize(mr, "najdete na Kaprova 38 spolu s 3 dalšími", table)
        assert res.text == "najdete na X-address spolu s X-count dalšími"

    def test_roundtrip_with_recorded_spans(self):
        mr = MeaningRepresentation(
            "inform", (("name", "Pivo & Basilico"), ("phone", "250625609"))
        )
        text = "Pivu & Basilicu lze volat na 250625609"
        res = delexicalize(mr, text, self.TABLE)
        restored = lexicalize(res.text, mr, self.TABLE, recorded_selector(res.fills))
        assert restored == text


class TestLexicalize:
    def test_identity_selector(self):
        mr = MeaningRepresentation("inform", (("name", "Green Spirit"),))
        assert lexicalize("X-name is cheap", mr, SurfaceFormTable()) == "Green Spirit is cheap"

    def test_no_placeholders(self):
        mr = MeaningRepresentation("inform", ())
        assert lexicalize("plain text", mr, SurfaceFormTable()) == "plain text"

    def test_missing_slot_errors(self):
        mr = MeaningRepresentation("inform", (("name", "A"),))
        with pytest.raises(LexicalizationError, match="X-area"):
            lexicalize("X-area", mr, SurfaceFormTable())


class TestSurfaceForms:
    def test_load(self, tmp_path):
        p = tmp_path / "sf.tsv"
        p.write_text("dinner\tvečeři|večeře\n", encoding="utf-8")
        table = load_surface_forms(p)
        assert table.lookup("dinner") == {"dinner", "večeři", "večeře"}

    def test_empty_file_identity_fallback(self, tmp_path):
        p = tmp_path / "sf.tsv"
        p.write_text("", encoding="utf-8")
        table = load_surface_forms(p)
        assert table.lookup("anything") == {"anything"}

    def test_duplicate_keys_unioned(self, tmp_path):
        p = tmp_path / "sf.tsv"
        p.write_text("x\ta|b\nx\tc\n", encoding="utf-8")
        assert load_surface_forms(p).lookup("x") == {"x", "a", "b", "c"}

    def test_malformed_line_reports_number(self, tmp_path):
        p = tmp_path / "sf.tsv"
        p.write_text("ok\ta\nbroken line\n", encoding="utf-8")
        with pytest.raises(ValueError, match=":2"):
            load_surface_forms(p)

    @given(slot_value)
    def test_lookup_contains_normalized_identity(self, value):
        table = SurfaceFormTable()
        assert normalize(value) in table.normalized_lookup(value)


class TestExample:
    def test_placeholder_validation(self):
        mr = MeaningRepresentation("inform", (("name", "A"),))
        Example(mr=mr, reference="A here", delex_reference="X-name here")
        with pytest.raises(ValueError):
            Example(mr=mr, reference="x", delex_reference="X-phone here")


class TestSchema:
    def test_default_slots(self):
        assert set(SCHEMA.keys()) == {
            "name", "area", "address", "phone", "good_for_meal", "near",
            "food", "price_range", "count", "price", "postcode", "kids_allowed",
        }
        assert not SCHEMA.is_delexicalizable("kids_allowed")
        assert SCHEMA.is_delexicalizable("name")
