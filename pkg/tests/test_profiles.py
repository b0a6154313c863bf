import pytest

from fedsim.errors import ConfigError, FleetLoadError
from fedsim.profiles import (
    CASE_STUDY_BUDGETS,
    ClientProfile,
    DemandPhase,
    DistributionSpec,
    WorkloadSpec,
    case_study_fleet,
    generate_fleet,
    load_fleet,
    parse_demand_profile,
    save_fleet,
)


class TestInvariants:
    def test_workload_rejects_bad_fields(self):
        with pytest.raises(ConfigError):
            WorkloadSpec(num_samples=-1)
        with pytest.raises(ConfigError):
            WorkloadSpec(batch_size=0)
        with pytest.raises(ConfigError):
            WorkloadSpec(extra_model_factor=0.5)

    def test_budget_range(self):
        with pytest.raises(ConfigError):
            ClientProfile(client_id="x", resource_budget=0)
        with pytest.raises(ConfigError):
            ClientProfile(client_id="x", resource_budget=101)

    def test_demand_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigError):
            ClientProfile(
                client_id="x",
                resource_budget=50,
                demand_profile=(DemandPhase(0.5, 90), DemandPhase(0.4, 20)),
            )


class TestGenerateFleet:
    def test_empty_fleet(self):
        assert generate_fleet(DistributionSpec(), 0, seed=1) == []

    def test_deterministic(self):
        dist = DistributionSpec(budget_levels=(25, 50, 75, 100))
        a = generate_fleet(dist, 1000, seed=7)
        b = generate_fleet(dist, 1000, seed=7)
        assert a == b

    def test_budgets_within_support(self):
        dist = DistributionSpec(budget_levels=(10, 40, 90))
        fleet = generate_fleet(dist, 500, seed=3)
        assert len(fleet) == 500
        assert {p.resource_budget for p in fleet} <= {10, 40, 90}

    def test_unique_ids(self):
        fleet = generate_fleet(DistributionSpec(), 200, seed=1)
        assert len({p.client_id for p in fleet}) == 200

    def test_bad_weights_rejected(self):
        dist = DistributionSpec(budget_levels=(10, 20), budget_weights=(0.5, 0.6))
        with pytest.raises(ConfigError):
            generate_fleet(dist, 5, seed=1)

    def test_empty_support_rejected(self):
        with pytest.raises(ConfigError):
            generate_fleet(DistributionSpec(budget_levels=()), 5, seed=1)

    def test_case_study_budgets(self):
        fleet = case_study_fleet()
        assert [p.resource_budget for p in fleet] == list(CASE_STUDY_BUDGETS)
        assert [p.client_id for p in fleet] == list("ABCDEFGH")


class TestFleetIO:
    def test_round_trip(self, tmp_path):
        dist = DistributionSpec(
            budget_levels=(10, 80),
            demand_profiles=("", "0.7:90;0.3:20"),
        )
        fleet = generate_fleet(dist, 40, seed=5)
        path = tmp_path / "fleet.csv"
        save_fleet(fleet, path)
        assert load_fleet(path) == fleet

    def test_load_three_rows(self, tmp_path):
        path = tmp_path / "fleet.csv"
        path.write_text(
            "client_id,budget,num_samples,batch_size,layers,seq_len,extra_factor,demand_profile\n"
            "a,10,100,10,1,8,1,\n"
            "b,50,100,10,1,8,1,0.7:90;0.3:20\n"
            "c,100,0,10,1,8,2,\n"
        )
        fleet = load_fleet(path)
        assert [p.client_id for p in fleet] == ["a", "b", "c"]
        assert fleet[1].demand_profile == (DemandPhase(0.7, 90), DemandPhase(0.3, 20))

    def test_budget_zero_names_row(self, tmp_path):
        path = tmp_path / "fleet.csv"
        path.write_text(
            "client_id,budget,num_samples,batch_size,layers,seq_len,extra_factor,demand_profile\n"
            "a,0,100,10,1,8,1,\n"
        )
        with pytest.raises(FleetLoadError, match=":2"):
            load_fleet(path)

    def test_duplicate_id_rejected(self, tmp_path):
        path = tmp_path / "fleet.csv"
        path.write_text(
            "client_id,budget,num_samples,batch_size,layers,seq_len,extra_factor,demand_profile\n"
            "a,10,100,10,1,8,1,\n"
            "a,20,100,10,1,8,1,\n"
        )
        with pytest.raises(FleetLoadError, match="duplicate"):
            load_fleet(path)


def test_parse_demand_profile_default():
    assert parse_demand_profile("") == (DemandPhase(1.0, 100.0),)
    assert parse_demand_profile("0.5:90;0.5:20") == (
        DemandPhase(0.5, 90),
        DemandPhase(0.5, 20),
    )
