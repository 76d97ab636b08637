import io
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from builders import demo, geoid
from oracles import bisg_bruteforce
from tract_equity.domain import RACES, GeoId, OwnerClass, RaceCategory, RaceDistribution, argmax_race
from tract_equity.errors import BothPriorsMissing, DuplicateParcel, InvalidDistribution, MissingColumn, MissingPrediction, UnclassifiedParcel
from tract_equity.imputation import (
    NON_INDIVIDUAL,
    BisgSource,
    ExternalSource,
    GeoPriorTable,
    Prediction,
    SurnamePriorTable,
    bayes_combine,
    bisg_posterior,
    impute_dataset,
    load_predictions,
    load_surname_priors,
    write_predictions,
    write_surname_priors,
)
from tract_equity.ingest import Dataset, ParcelRecord

D = RaceDistribution
G = GeoId("36047034901")
NATIONAL = D((0.60, 0.12, 0.19, 0.06, 0.03))


def tables(surnames, tract_prior, national=NATIONAL):
    return SurnamePriorTable({k: D(v) for k, v in surnames.items()}, national), GeoPriorTable({G: D(tract_prior)})


class TestBisgPosterior:
    def test_hand_computed(self):
        priors, geo = tables({"JONES": (0.10, 0.70, 0.10, 0.05, 0.05)}, (0.60, 0.20, 0.10, 0.05, 0.05))
        post = bisg_posterior("jones", G, priors, geo)
        # elementwise s*g/n: 0.1, 1.16667, 0.052632, 0.041667, 0.083333; total 1.444298
        expected = [0.069237, 0.807773, 0.036441, 0.028849, 0.057698]
        assert list(post.probs) == pytest.approx(expected, abs=5e-6)
        assert list(post.probs) == pytest.approx(bisg_bruteforce(priors.get("JONES").probs, geo.get(G).probs, NATIONAL.probs), abs=1e-15)

    def test_uninformative_surname_returns_tract_prior(self):
        priors, geo = tables({"X": NATIONAL.probs}, (0.3, 0.3, 0.2, 0.1, 0.1))
        assert bisg_posterior("X", G, priors, geo) == geo.get(G)

    def test_uniform_geo_returns_surname_prior(self):
        priors, geo = tables({"X": (0.1, 0.2, 0.3, 0.2, 0.2)}, (0.2,) * 5, national=D.uniform())
        assert bisg_posterior("X", G, priors, geo) == priors.get("X")

    def test_unknown_surname_uses_tract(self):
        priors, geo = tables({}, (0.3, 0.3, 0.2, 0.1, 0.1))
        assert bisg_posterior("NOBODY", G, priors, geo) == geo.get(G)

    def test_unknown_tract_uses_surname(self):
        priors, geo = tables({"X": (0.1, 0.2, 0.3, 0.2, 0.2)}, (0.2,) * 5)
        assert bisg_posterior("X", GeoId("36001000100"), priors, geo) == priors.get("X")

    def test_both_missing(self):
        priors, geo = tables({}, (0.2,) * 5)
        with pytest.raises(BothPriorsMissing):
            bisg_posterior("X", GeoId("36001000100"), priors, geo)

    def test_disjoint_support_is_floored(self):
        post = bayes_combine(D.point_mass(RaceCategory.BLACK), D.point_mass(RaceCategory.WHITE), NATIONAL)
        assert math.fsum(post.probs) == pytest.approx(1.0, abs=1e-12)
        assert argmax_race(post) in (RaceCategory.WHITE, RaceCategory.BLACK)

    def test_national_must_be_positive(self):
        with pytest.raises(InvalidDistribution):
            SurnamePriorTable({}, D((1.0, 0, 0, 0, 0)))


@pytest.mark.parametrize(
    "probs, expected",
    [
        ((0.1, 0.6, 0.1, 0.1, 0.1), RaceCategory.BLACK),
        ((0.4, 0.4, 0.1, 0.05, 0.05), RaceCategory.WHITE),
        ((0.2, 0.2, 0.2, 0.2, 0.2), RaceCategory.WHITE),
        ((0.1, 0.1, 0.3, 0.3, 0.2), RaceCategory.HISPANIC),
    ],
)
def test_argmax(probs, expected):
    assert argmax_race(D(probs)) is expected


class TestLoadPredictions:
    HEADER = "parcel_id,p_white,p_black,p_hispanic,p_asian,p_other\n"

    def load(self, body, **kw):
        return load_predictions(io.StringIO(self.HEADER + body), **kw)

    def test_accepts_valid_row(self):
        res = self.load("P1,0.7,0.1,0.1,0.05,0.05\n")
        assert res.predictions["P1"].probs == pytest.approx((0.7, 0.1, 0.1, 0.05, 0.05))
        assert res.rejects == []

    def test_bad_sum(self):
        res = self.load("P1,0.5,0.1,0.1,0.05,0.05\n")
        assert res.predictions == {}
        assert res.rejects[0].reason.startswith("InvalidDistribution")
        with pytest.raises(InvalidDistribution):
            self.load("P1,0.5,0.1,0.1,0.05,0.05\n", strict=True)

    def test_duplicate(self):
        body = "P1,0.7,0.1,0.1,0.05,0.05\nP1,0.1,0.7,0.1,0.05,0.05\n"
        res = self.load(body)
        assert argmax_race(res.predictions["P1"]) is RaceCategory.WHITE
        assert res.rejects[0].reason.startswith("DuplicateParcel")
        with pytest.raises(DuplicateParcel):
            self.load(body, strict=True)

    def test_small_drift_renormalised(self):
        res = self.load("P1,0.7004,0.1,0.1,0.05,0.05\n")
        assert math.fsum(res.predictions["P1"].probs) == pytest.approx(1.0, abs=1e-12)

    def test_missing_column(self):
        with pytest.raises(MissingColumn):
            load_predictions(io.StringIO("parcel_id,p_white\nP1,1\n"))

    def test_round_trip(self):
        preds = {"B": D((0.1, 0.2, 0.3, 0.2, 0.2)), "A": D.point_mass(RaceCategory.ASIAN)}
        buf = io.StringIO()
        write_predictions(preds, buf)
        assert load_predictions(io.StringIO(buf.getvalue())).predictions == preds


def test_surname_prior_round_trip():
    table = SurnamePriorTable({"LEE": D((0.4, 0.1, 0.05, 0.4, 0.05)), "KIM": D((0.01, 0.01, 0.01, 0.96, 0.01))}, NATIONAL)
    buf = io.StringIO()
    write_surname_priors(table, buf)
    again = load_surname_priors(io.StringIO(buf.getvalue()))
    assert dict(again.surnames) == dict(table.surnames) and again.national == table.national


def test_surname_priors_require_national_row():
    with pytest.raises(MissingColumn):
        load_surname_priors(io.StringIO("surname,p_white,p_black,p_hispanic,p_asian,p_other\nLEE,0.2,0.2,0.2,0.2,0.2\n"))


class TestImputeDataset:
    def dataset(self, names):
        parcels = [ParcelRecord(f"P{i}", G, 1.0, n, None) for i, n in enumerate(names, 1)]
        from tract_equity.entities import classify_parcels

        return Dataset(classify_parcels(parcels), {G: demo(G, (0.6, 0.2, 0.1, 0.05))})

    def priors(self):
        return SurnamePriorTable({"SMITH": D((0.7, 0.2, 0.05, 0.03, 0.02)), "NGUYEN": D((0.02, 0.01, 0.01, 0.95, 0.01))}, NATIONAL)

    def test_two_individuals_one_llc(self):
        res = impute_dataset(self.dataset(["SMITH JOHN", "NGUYEN AN", "ACME LLC"]), BisgSource(self.priors()))
        assert isinstance(res["P1"], Prediction) and isinstance(res["P2"], Prediction)
        assert res["P3"] is NON_INDIVIDUAL
        assert res["P2"].race is RaceCategory.ASIAN
        assert len(res.races) == 2 and res.non_individual == ["P3"]

    def test_all_corporate(self):
        res = impute_dataset(self.dataset(["A LLC", "B INC"]), BisgSource(self.priors()))
        assert res.races == {} and len(res.non_individual) == 2

    def test_external_missing_parcel_named(self):
        ds = self.dataset(["SMITH JOHN", "NGUYEN AN"])
        with pytest.raises(MissingPrediction, match="P2"):
            impute_dataset(ds, ExternalSource({"P1": D.point_mass(RaceCategory.WHITE)}))

    def test_external_predictions_used_verbatim(self):
        ds = self.dataset(["SMITH JOHN"])
        d = D((0.1, 0.1, 0.6, 0.1, 0.1))
        res = impute_dataset(ds, ExternalSource({"P1": d}))
        assert res["P1"].distribution == d and res["P1"].race is RaceCategory.HISPANIC

    def test_unclassified_parcel(self):
        ds = Dataset([ParcelRecord("P1", G, 1.0, "SMITH")], {G: demo(G, (0.6, 0.2, 0.1, 0.05))})
        with pytest.raises(UnclassifiedParcel):
            impute_dataset(ds, BisgSource(self.priors()))

    def test_national_fallback(self):
        g2 = geoid(77)
        ds = Dataset([ParcelRecord("P1", g2, 1.0, "ZZYZX ANN", OwnerClass.INDIVIDUAL)], {g2: demo(g2, (0, 0, 0, 0), population=0)})
        res = impute_dataset(ds, BisgSource(self.priors()))
        assert res["P1"].fallback and res.fallbacks == ("P1",)
        assert res["P1"].distribution == NATIONAL
        with pytest.raises(BothPriorsMissing):
            impute_dataset(ds, BisgSource(self.priors(), national_fallback=False))


# -- properties -------------------------------------------------------------------------

_positive = st.lists(st.floats(1e-4, 1.0), min_size=5, max_size=5).map(D.from_weights)
_nonneg = st.lists(st.floats(0.0, 1.0), min_size=5, max_size=5).filter(lambda v: sum(v) > 1e-6).map(D.from_weights)


@given(_nonneg, _nonneg, _positive)
def test_posterior_is_a_distribution(s, g, n):
    post = bayes_combine(s, g, n)
    assert abs(math.fsum(post.probs) - 1.0) <= 1e-9
    assert all(0.0 <= p <= 1.0 for p in post.probs)


@given(_positive, _positive, _positive)
def test_posterior_matches_bruteforce(s, g, n):
    assert list(bayes_combine(s, g, n).probs) == pytest.approx(bisg_bruteforce(s.probs, g.probs, n.probs), rel=1e-9, abs=1e-12)


@given(_nonneg, _positive)
def test_uninformative_surname_exact(g, n):
    assert bayes_combine(n, g, n) == g


@given(_nonneg)
def test_uniform_geo_exact(s):
    post = bayes_combine(s, D.uniform(), D.uniform())
    if len(set(s.probs)) == 1:
        # both priors uninformative: either one is the answer, up to rounding
        assert post.probs == pytest.approx(s.probs, abs=1e-15)
    else:
        assert post == s


@given(_positive, _positive, st.sampled_from(RACES))
def test_point_mass_geo(s, n, r):
    assert bayes_combine(s, D.point_mass(r), n) == D.point_mass(r)


@given(_positive, _positive, _positive, st.sampled_from(RACES), st.floats(0.0, 1.0))
def test_monotone_in_tract_prior(s, g, n, r, t):
    g_r = g[r]
    bumped = g_r + t * (1.0 - g_r)
    scale = (1.0 - bumped) / (1.0 - g_r) if g_r < 1.0 else 0.0
    g2 = D.from_weights([bumped if i == r else g[i] * scale for i in range(5)])
    assert bayes_combine(s, g2, n)[r] >= bayes_combine(s, g, n)[r] - 1e-12


@given(_positive, _positive, _positive, st.integers(-20, 20))
def test_argmax_invariant_under_rescaling(s, g, n, k):
    raw = [s[i] * g[i] / n[i] for i in range(5)]
    scaled = [v * 2.0**k for v in raw]  # power-of-two scaling is exact, so ties are preserved
    assert argmax_race(raw) is argmax_race(scaled)
    top, second = sorted(raw, reverse=True)[:2]
    if top - second > 1e-9 * top:
        assert argmax_race(bayes_combine(s, g, n)) is argmax_race(raw)
