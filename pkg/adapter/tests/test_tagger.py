import json

from embed_adapter.tagger import tag_queries, tag_text

UPOS = {
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
}


class TestTagText:
    def test_golden_a_red_car(self):
        tokens, tags = tag_text("a red car")
        assert tokens == ["a", "red", "car"]
        assert tags == ["DET", "ADJ", "NOUN"]

    def test_query_like_sentences(self):
        cases = {
            "Two dogs running in a park.": ["NUM", "NOUN", "VERB", "ADP", "DET", "NOUN"],
            "a person riding a bike": ["DET", "NOUN", "VERB", "DET", "NOUN"],
            "an old man with a white beard": ["DET", "ADJ", "NOUN", "ADP", "DET", "ADJ", "NOUN"],
        }
        for text, expected in cases.items():
            _, tags = tag_text(text)
            assert tags == expected, text

    def test_proper_noun_mid_sentence(self):
        _, tags = tag_text("a bridge in Dublin")
        assert tags == ["DET", "NOUN", "ADP", "PROPN"]

    def test_tags_are_upos(self):
        for text in (
            "Seven quickly running beautiful dancers and their shiny, wet shoes!",
            "someone is walking towards the 3rd Avenue exit",
        ):
            tokens, tags = tag_text(text)
            assert len(tokens) == len(tags)
            assert all(t in UPOS for t in tags)

    def test_always_aligned(self):
        for text in ("x", "a b c d e", "  spaced   out  ", "1 2 3 ..."):
            tokens, tags = tag_text(text)
            assert len(tokens) == len(tags)

    def test_deterministic(self):
        text = "A man holding a red umbrella near the station"
        assert tag_text(text) == tag_text(text)


class TestTagQueries:
    def test_table_schema(self, tmp_path):
        records = [
            {"query_id": "q1", "text": "a red car"},
            {"query_id": "q2", "text": "Two dogs running"},
        ]
        out = tmp_path / "tags.jsonl"
        assert tag_queries(records, out) == 2
        lines = [json.loads(l) for l in out.read_text().splitlines()]
        assert [l["query_id"] for l in lines] == ["q1", "q2"]
        for line in lines:
            assert len(line["tokens"]) == len(line["tags"])

    def test_round_trips_through_primary_syntactic_perturbations(self, tmp_path):
        # contract test: the emitted table drives the core's tag-dependent types
        from rank_brittle.perturb import PerturbationSpec, perturb_syntactic, read_tag_table

        records = [{"query_id": "q1", "text": "a red car on a busy street"}]
        out = tmp_path / "tags.jsonl"
        tag_queries(records, out)
        table = read_tag_table(out)
        tags = table.tags_for("q1", records[0]["text"])
        assert tags is not None
        assert perturb_syntactic(
            records[0]["text"], PerturbationSpec("noun_only"), tags=tags
        ) == "car street"
        assert perturb_syntactic(
            records[0]["text"], PerturbationSpec("adjective_noun_only"), tags=tags
        ) == "red car busy street"
