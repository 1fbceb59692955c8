import pathlib

import pytest

import rlentropy as rle

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"

# Two-letter walk with level swaps: every pair communicates within its level,
# so the single cone type has a four-word boundary (no unambiguous type).
MULTI_TEXT = """
alphabet: a b
rule: o -> a : 1/2
rule: o -> b : 1/2
rule: a -> o : 1/4
rule: a -> b : 1/4
rule: a -> aa : 1/4
rule: a -> ab : 1/4
rule: b -> o : 1/4
rule: b -> a : 1/4
rule: b -> ba : 1/4
rule: b -> bb : 1/4
rule: aa -> a : 1/4
rule: aa -> aa : 1/4
rule: aa -> aaa : 1/4
rule: aa -> aab : 1/4
rule: ab -> a : 1/4
rule: ab -> ba : 1/4
rule: ab -> aba : 1/4
rule: ab -> abb : 1/4
rule: ba -> b : 1/4
rule: ba -> ab : 1/4
rule: ba -> baa : 1/4
rule: ba -> bab : 1/4
rule: bb -> b : 1/4
rule: bb -> bb : 1/4
rule: bb -> bba : 1/4
rule: bb -> bbb : 1/4
"""


def fixture_path(name):
    return FIXTURES / f"{name}.rw"


_cache = {}


def get_model(name):
    if name not in _cache:
        if name == "multi":
            _cache[name] = rle.parse_model(MULTI_TEXT, source="multi")
        elif name == "twotype":
            _cache[name] = rle.parse_model(TWOTYPE_TEXT, source="twotype")
        elif name == "mixed":
            _cache[name] = rle.parse_model(MIXED_TEXT, source="mixed")
        else:
            _cache[name] = rle.load_model(fixture_path(name))
    return _cache[name]


@pytest.fixture(scope="session")
def fg2():
    return get_model("fg2")


@pytest.fixture(scope="session")
def t3():
    return get_model("t3")


@pytest.fixture(scope="session")
def ne():
    return get_model("ne")


@pytest.fixture(scope="session")
def line():
    return get_model("line")


@pytest.fixture(scope="session")
def glued():
    return get_model("glued")


@pytest.fixture(scope="session")
def a2():
    return get_model("a2")


@pytest.fixture(scope="session")
def multi():
    return get_model("multi")


_gf_cache = {}


def get_gf(name):
    if name not in _gf_cache:
        _gf_cache[name] = rle.solve_all(get_model(name))
    return _gf_cache[name]


_analysis_cache = {}


def get_analysis(name, **kw):
    from rlentropy import pipeline
    key = (name, tuple(sorted(kw.items())))
    if key not in _analysis_cache:
        _analysis_cache[key] = pipeline.analyze(get_model(name), **kw)
    return _analysis_cache[key]


_atlas_cache = {}


def get_atlas(name, **kw):
    from rlentropy import cones
    key = (name, tuple(sorted(kw.items())))
    if key not in _atlas_cache:
        _atlas_cache[key] = cones.build_atlas(get_model(name), **kw)
    return _atlas_cache[key]


_chain_cache = {}


def get_chain(name):
    from rlentropy import lastentry
    if name not in _chain_cache:
        _chain_cache[name] = lastentry.build_chain(
            get_model(name), get_gf(name), get_atlas(name))
    return _chain_cache[name]


# Two communicating families {aa,ab} and {ba,bb} (linked by level rewrites),
# each a cone type with a two-word boundary; cross-ascents connect the types.
MIXED_TEXT = """
alphabet: a b
rule: o -> a : 1/2
rule: o -> b : 1/2
rule: a -> o : 1/4
rule: a -> aa : 3/8
rule: a -> ab : 3/8
rule: b -> o : 1/4
rule: b -> ba : 3/8
rule: b -> bb : 3/8
rule: aa -> a : 1/4
rule: aa -> ab : 1/4
rule: aa -> aaa : 1/4
rule: aa -> aab : 1/4
rule: ab -> a : 1/4
rule: ab -> aa : 1/4
rule: ab -> aba : 1/4
rule: ab -> abb : 1/4
rule: ba -> b : 1/4
rule: ba -> baa : 3/8
rule: ba -> bab : 3/8
rule: bb -> b : 1/4
rule: bb -> bba : 3/8
rule: bb -> bbb : 3/8
"""

# Two communicating families, each a cone type with a two-word boundary;
# cross-ascents connect the types.
TWOTYPE_TEXT = """
alphabet: a b
rule: o -> a : 1/2
rule: o -> b : 1/2
rule: a -> o : 1/4
rule: a -> aa : 3/8
rule: a -> ab : 3/8
rule: b -> o : 1/4
rule: b -> ba : 3/8
rule: b -> bb : 3/8
rule: aa -> a : 1/4
rule: aa -> ab : 1/4
rule: aa -> aaa : 1/4
rule: aa -> aab : 1/4
rule: ab -> a : 1/4
rule: ab -> aa : 1/4
rule: ab -> aba : 1/4
rule: ab -> abb : 1/4
rule: ba -> b : 1/4
rule: ba -> bb : 1/4
rule: ba -> baa : 1/4
rule: ba -> bab : 1/4
rule: bb -> b : 1/4
rule: bb -> ba : 1/4
rule: bb -> bba : 1/4
rule: bb -> bbb : 1/4
"""
