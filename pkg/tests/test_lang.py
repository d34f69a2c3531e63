import pytest
from hypothesis import given, settings, strategies as st

from hvx.errors import EvalError, ExpandError, FuelExhausted, LangUserError, RunStopped
from hvx.kernel import make_expand_ctx, make_world, run_program
from hvx.lang import destructure, expand, gensym
from hvx.reader import dnum, print_datum, read_one


def run(text, **kw):
    return run_program(text, **kw)


def test_eval_basics():
    assert run("((fn [x] (+ x 1)) 41)").value_text == "42"
    assert run("(let [{:keys [AB]} {:AB 7}] AB)").value_text == "7"
    assert run("(let [b (atom 42)] (swap! b inc) @b)").value_text == "43"
    assert run("(if nil 1 2)").value_text == "2"
    assert run("(str \"n=\" 3)").value_text == '"n=3"'


def test_eval_errors():
    with pytest.raises(EvalError, match="unbound symbol 'nope'"):
        run("(nope 1)")
    with pytest.raises(EvalError, match="arity mismatch"):
        run("((fn [x] x) 1 2)")
    with pytest.raises(EvalError, match="division by zero"):
        run("(/ 1 0)")


def test_numbers_stay_distinct():
    assert run("(= 1 1.0)").value_text == "false"
    assert run("(== 1 1.0)").value_text == "true"
    assert run("(/ 4 2)").value_text == "2"
    assert run("(/ 1 2)").value_text == "0.5"


def test_let_is_sequential_and_destructuring():
    assert run("(let [a 1 b (+ a 1) [c d] [b 9]] (vector a b c d))").value_text == "[1 2 2 9]"
    assert run("(let [{:keys [x]} {}] x)").value_text == "nil"
    assert run("(let [[a b] [1]] (vector a b))").value_text == "[1 nil]"


def test_destructure_op():
    out = destructure(read_one("[a b]"), read_one("[1 2]"))
    assert [(n, print_datum(v)) for n, v in out] == [("a", "1"), ("b", "2")]
    out = destructure(read_one("{:keys [AB BC ABC]}"), read_one("{:AB 1 :BC 2 :ABC 3}"))
    assert [n for n, _ in out] == ["AB", "BC", "ABC"]


def test_defmacro_and_two_step_expansion():
    # a macro that expands to a defmacro which a later sibling form uses
    text = """
(defmacro make-adder [name n]
  `(defmacro ~name [x] (list (quote +) x ~n)))
(make-adder add-ten 10)
(add-ten 32)
"""
    assert run(text).value_text == "42"


def test_macro_left_as_runtime_call_when_unbound():
    with pytest.raises(EvalError, match="unbound symbol 'Widget'"):
        run("(Widget {:x 1})")


def test_expand_leaves_special_forms():
    world = make_world("compile")
    ctx = make_expand_ctx(world)
    form = read_one("(let [x 1] x)")
    assert print_datum(expand(form, ctx, ctx.env())) == "(let [x 1] x)"


def test_gensym_uniqueness_and_roundtrip():
    a, b = gensym("t"), gensym("t")
    assert a != b
    assert read_one(print_datum(a)) == a


def test_gensym_hygiene_binder_direction():
    # a macro introduces its own binder via auto-gensym; user's x is untouched
    text = """
(defmacro with-doubled [e] `(let [v# ~e] (+ v# v#)))
(let [v 100] (+ v (with-doubled 3)))
"""
    assert run(text).value_text == "106"


def test_alpha_renaming_invariance():
    template = """
(defmacro wrap [e] `(let [tmp# ~e] tmp#))
(let [VAR 5] (+ VAR (wrap VAR)))
"""
    a = run(template.replace("VAR", "x")).value_text
    b = run(template.replace("VAR", "y")).value_text
    assert a == b == "10"


def test_quasiquote_depth_and_splicing():
    assert run("(let [xs [1 2]] `(a ~@xs b))").value_text == "(a 1 2 b)"
    assert run("`[1 ~(+ 1 1)]").value_text == "[1 2]"


def test_match_trivial_and_tree_shapes():
    assert run("(match 5 _ :any)").value_text == ":any"
    rb = """
(match [:black [:red [:red 1 2 3] 4 5] 6 7]
  [:black [:red [:red a x b] y c] z d] [a x b y c z d]
  _ :no)
"""
    assert run(rb).value_text == "[1 2 3 4 5 6 7]"
    assert run("(match {:a 1} {:a v} v _ :no)").value_text == "1"
    assert run("(match {:b 1} {:a v} v _ :no)").value_text == ":no"


def test_match_or_pattern():
    assert run("(match 3 (:or 1 2 3) :small _ :big)").value_text == ":small"
    with pytest.raises(EvalError, match="no matching clause"):
        run("(match 9 (:or 1 2) :small)")


def test_match_or_binder_sets_must_agree():
    with pytest.raises(ExpandError, match="bind different sets"):
        run("(match [1 2] (:or [a b] [a]) a)")


def test_match_non_linear_pattern_rejected():
    with pytest.raises(ExpandError, match="non-linear"):
        run("(match [1 1] [a a] a)")


def test_namespaces_and_qualified_resolution():
    text = """
(ns lib)
(defn helper [x] (* x 10))
(ns user (:require [lib :as l]))
(l/helper 4)
"""
    assert run(text).value_text == "40"


def test_macro_references_resolve_in_defining_namespace():
    text = """
(ns lib)
(defn helper [x] (* x 10))
(defmacro use-helper [x] `(helper ~x))
(ns user)
(defn helper [x] (* x 1000))
(lib/use-helper 4)
"""
    assert run(text).value_text == "40"


def test_determinism_of_pure_eval():
    text = "(reduce + 0 (map (fn [x] (* x x)) (range 20)))"
    assert run(text).value_text == run(text).value_text == "2470"


def test_fuel_exhaustion_is_distinct():
    with pytest.raises(FuelExhausted):
        run("((fn go [] (go)))", run_fuel=5000)


def test_fuel_monotonicity():
    text = "(reduce + 0 (range 50))"
    lo, hi = 1, 100_000
    while lo < hi:  # smallest budget that succeeds
        mid = (lo + hi) // 2
        try:
            run(text, run_fuel=mid)
            hi = mid
        except FuelExhausted:
            lo = mid + 1
    v1 = run(text, run_fuel=lo).value_text
    v2 = run(text, run_fuel=lo + 1000).value_text
    v3 = run(text).value_text
    assert v1 == v2 == v3


def test_stop_takes_effect_within_one_quantum():
    quantum = 1000
    fire_at = 3  # stop request arrives at the 3rd quantum boundary
    calls = {"n": 0}

    def stop_check():
        calls["n"] += 1
        return calls["n"] >= fire_at

    with pytest.raises(RunStopped):
        run("((fn go [] (go)))", run_fuel=None, quantum=quantum, stop_check=stop_check)
    assert calls["n"] == fire_at  # checked once per quantum, no later


def test_user_error_builtin():
    with pytest.raises(LangUserError, match="boom"):
        run('(error "boom")')


def test_collection_builtins():
    assert run("(conj [1 2] 3)").value_text == "[1 2 3]"
    assert run("(conj (list 1 2) 3)").value_text == "(3 1 2)"
    assert run("(assoc {:a 1} :b 2)").value_text == "{:a 1 :b 2}"
    assert run("(update {:n 1} :n inc)").value_text == "{:n 2}"
    assert run("(distinct [1 2 1 3])").value_text == "(1 2 3)"
    assert run("(merge {:a 1} {:a 2 :b 3})").value_text == "{:a 2 :b 3}"
    assert run("(apply + 1 [2 3])").value_text == "6"
    assert run("(keys {:a 1 :b 2})").value_text == "(:a :b)"
    assert run("((fn [& xs] (count xs)) 1 2 3)").value_text == "3"
    assert run("(:count {:count 42})").value_text == "42"


def test_keyword_metadata_builtins():
    assert run('(name :a/b)').value_text == '"b"'
    assert run('(keyword "k")').value_text == ":k"
    assert run("(meta (with-meta [1] {:tag 1}))").value_text == "{:tag 1}"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=-50, max_value=50), max_size=8))
def test_referential_transparency_property(xs):
    vec_text = "[" + " ".join(str(x) for x in xs) + "]"
    text = f"(reduce + 0 (map (fn [x] (* 2 x)) {vec_text}))"
    assert run(text).value == dnum(2 * sum(xs))
