import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenequery.errors import ParseError, UnknownSchemaVersion
from scenequery.query import (
    And,
    CountAtLeast,
    Equals,
    FeaturePredicate,
    GreaterThan,
    IsActive,
    LessThan,
    Not,
    Or,
    TextContains,
    canonical_node,
    canonicalize,
    from_document,
    node_from_json,
    to_document,
    validate,
    validate_structure,
)

# ---------------------------------------------------------------------------
# hypothesis strategies over the full AST space (features need not exist in
# any bundle; serialization is bundle-independent)

_feature_names = st.sampled_from(["volume", "pitch", "utterance", "nod", "blink", "voice_activity", "expression"])
_finite = st.floats(allow_nan=False, allow_infinity=False, min_value=-1e9, max_value=1e9)
_patterns = st.text(min_size=1, max_size=12)


def _predicates():
    return st.one_of(
        st.builds(GreaterThan, threshold=_finite),
        st.builds(LessThan, threshold=_finite),
        st.builds(TextContains, pattern=_patterns, case_insensitive=st.booleans()),
        st.builds(CountAtLeast, n=st.integers(min_value=1, max_value=9),
                  window_s=st.floats(min_value=0.01, max_value=100, allow_nan=False)),
        st.just(IsActive()),
        st.builds(Equals, label=st.text(min_size=1, max_size=10)),
    )


def _leaves():
    return st.builds(
        FeaturePredicate,
        feature=_feature_names,
        attribute=st.one_of(st.none(), st.sampled_from(["text", "filler_count", "label"])),
        predicate=_predicates(),
    )


def asts(max_depth: int = 4):
    return st.recursive(
        _leaves(),
        lambda children: st.one_of(
            st.builds(And, children=st.lists(children, min_size=2, max_size=4).map(tuple)),
            st.builds(Or, children=st.lists(children, min_size=2, max_size=4).map(tuple)),
            st.builds(Not, child=children),
        ),
        max_leaves=12,
    )


class TestDocumentRoundTrip:
    @settings(max_examples=300, deadline=None)
    @given(asts())
    def test_round_trip_identity(self, node):
        assert from_document(to_document(node)) == node

    def test_document_is_versioned(self):
        doc = json.loads(to_document(FeaturePredicate(feature="nod", predicate=IsActive())))
        assert doc["schema_version"] == "1"
        assert doc["root"]["kind"] == "feature"

    def test_unknown_node_kind(self):
        text = '{"schema_version":"1","root":{"kind":"xor","children":[]}}'
        with pytest.raises(ParseError):
            from_document(text)

    def test_unknown_schema_version(self):
        with pytest.raises(UnknownSchemaVersion):
            from_document('{"schema_version":"9","root":{"kind":"not"}}')

    def test_malformed_json_reports_position(self):
        with pytest.raises(ParseError) as exc:
            from_document("{not json")
        assert exc.value.line == 1

    def test_integral_floats_render_without_decimal_point(self):
        node = FeaturePredicate(feature="nod", predicate=CountAtLeast(n=1, window_s=2.0))
        assert '"window_s":2}' in to_document(node)
        assert from_document(to_document(node)).predicate.window_s == 2.0


class TestCanonicalization:
    a = FeaturePredicate(feature="volume", predicate=GreaterThan(0.5))
    b = FeaturePredicate(feature="nod", predicate=CountAtLeast(n=1, window_s=2.0))
    c = FeaturePredicate(feature="utterance", attribute="text",
                         predicate=TextContains(pattern="why"))

    def test_and_commutativity(self):
        assert canonicalize(And(children=(self.b, self.a))) == canonicalize(And(children=(self.a, self.b)))

    def test_or_commutativity(self):
        assert canonicalize(Or(children=(self.c, self.a))) == canonicalize(Or(children=(self.a, self.c)))

    def test_double_negation(self):
        assert canonicalize(Not(child=Not(child=self.a))) == canonicalize(self.a)

    def test_nested_normalization(self):
        lhs = Or(children=(And(children=(self.b, self.a)), self.c))
        rhs = Or(children=(self.c, And(children=(self.a, self.b))))
        assert canonicalize(lhs) == canonicalize(rhs)

    def test_de_morgan_not_folded(self):
        lhs = Not(child=And(children=(self.a, self.b)))
        rhs = Or(children=(Not(child=self.a), Not(child=self.b)))
        assert canonicalize(lhs) != canonicalize(rhs)

    @settings(max_examples=200, deadline=None)
    @given(asts())
    def test_idempotent(self, node):
        canonical = canonicalize(node)
        assert canonicalize(canonical_node(canonical)) == canonical

    @settings(max_examples=200, deadline=None)
    @given(asts())
    def test_double_negation_everywhere(self, node):
        assert canonicalize(Not(child=Not(child=node))) == canonicalize(node)


class TestValidate:
    def test_numeric_predicate_on_text_attribute(self, demo_bundle):
        node = FeaturePredicate(feature="utterance", attribute="text", predicate=GreaterThan(1.0))
        errors = validate(node, demo_bundle)
        assert any(e.code == "type_mismatch" for e in errors)

    def test_and_arity(self, demo_bundle):
        node = And(children=(FeaturePredicate(feature="nod", predicate=IsActive()),))
        errors = validate(node, demo_bundle)
        assert any(e.code == "arity_violation" for e in errors)

    def test_demo_query_ok(self, demo_bundle):
        node = And(children=(
            FeaturePredicate(feature="voice_activity", predicate=IsActive()),
            FeaturePredicate(feature="nod", predicate=CountAtLeast(n=1, window_s=2.0)),
        ))
        assert validate(node, demo_bundle) == []

    def test_unknown_feature(self, demo_bundle):
        node = FeaturePredicate(feature="gaze_x", predicate=GreaterThan(0.0))
        errors = validate(node, demo_bundle)
        assert [e.code for e in errors] == ["unknown_feature"]

    def test_count_on_interval_feature(self, demo_bundle):
        node = FeaturePredicate(feature="utterance", predicate=CountAtLeast(n=1, window_s=1.0))
        assert any(e.code == "type_mismatch" for e in validate(node, demo_bundle))

    def test_text_predicate_needs_attribute(self, demo_bundle):
        node = FeaturePredicate(feature="utterance", predicate=TextContains(pattern="x"))
        assert any(e.code == "attribute_required" for e in validate(node, demo_bundle))

    def test_gt_on_interval_needs_numeric_attribute(self, demo_bundle):
        node = FeaturePredicate(feature="utterance", predicate=GreaterThan(1.0))
        assert any(e.code == "attribute_required" for e in validate(node, demo_bundle))

    def test_is_active_rejects_numeric(self, demo_bundle):
        node = FeaturePredicate(feature="volume", predicate=IsActive())
        assert any(e.code == "type_mismatch" for e in validate(node, demo_bundle))

    def test_attribute_on_numeric_feature(self, demo_bundle):
        node = FeaturePredicate(feature="volume", attribute="text", predicate=GreaterThan(0.0))
        assert any(e.code == "attribute_not_allowed" for e in validate(node, demo_bundle))

    def test_unknown_attribute(self, demo_bundle):
        node = FeaturePredicate(feature="utterance", attribute="bogus", predicate=GreaterThan(0.0))
        assert any(e.code == "unknown_attribute" for e in validate(node, demo_bundle))

    def test_errors_carry_node_paths(self, demo_bundle):
        node = And(children=(
            FeaturePredicate(feature="volume", predicate=GreaterThan(0.1)),
            FeaturePredicate(feature="utterance", attribute="text", predicate=LessThan(1.0)),
        ))
        errors = validate(node, demo_bundle)
        assert [e.path for e in errors] == ["root.1"]

    def test_structure_only_checks(self):
        node = And(children=(FeaturePredicate(feature="x", predicate=GreaterThan(float("inf"))),))
        codes = {e.code for e in validate_structure(node)}
        assert codes == {"arity_violation", "bad_threshold"}

    def test_empty_pattern(self, demo_bundle):
        node = FeaturePredicate(feature="utterance", attribute="text", predicate=TextContains(pattern=""))
        assert any(e.code == "empty_pattern" for e in validate(node, demo_bundle))

    def test_depth_limit(self, demo_bundle):
        node = FeaturePredicate(feature="nod", predicate=IsActive())
        for _ in range(40):
            node = Not(child=node)
        assert any(e.code == "depth_exceeded" for e in validate(node, demo_bundle))

    def test_node_count_limit(self, demo_bundle):
        leaves = tuple(FeaturePredicate(feature="nod", predicate=IsActive()) for _ in range(300))
        node = And(children=leaves)
        assert any(e.code == "size_exceeded" for e in validate(node, demo_bundle))


class TestNodeJson:
    def test_feature_node_field_order(self):
        node = FeaturePredicate(feature="utterance", attribute="text",
                                predicate=TextContains(pattern="x", case_insensitive=False))
        doc = to_document(node)
        assert doc.index('"kind"') < doc.index('"feature"') < doc.index('"attribute"') < doc.index('"predicate"')

    def test_golden_document_bytes(self, golden_query_path):
        node = And(children=(
            FeaturePredicate(feature="voice_activity", predicate=IsActive()),
            FeaturePredicate(feature="nod", predicate=CountAtLeast(n=1, window_s=2.0)),
        ))
        assert to_document(node).encode() == golden_query_path.read_bytes()

    def test_bool_not_accepted_as_number(self):
        with pytest.raises(ParseError):
            node_from_json({"kind": "feature", "feature": "volume",
                            "predicate": {"op": "gt", "threshold": True}})
