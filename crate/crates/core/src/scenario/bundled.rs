//! Scenario configs shipped with the library.

/// A config compiled into the binary.
#[derive(Debug, Clone, Copy)]
pub struct BundledScenario {
    pub name: &'static str,
    pub text: &'static str,
}

macro_rules! bundle {
    ($($name:literal),* $(,)?) => {
        &[$(BundledScenario {
            name: $name,
            text: include_str!(concat!("../../scenarios/", $name, ".json")),
        }),*]
    };
}

static BUNDLED: &[BundledScenario] = bundle!(
    "anomalous_spin_weak_value",
    "born_rule_two_branch",
    "equivariance_free_packet",
    "free_packet_evolve",
    "free_packet_trajectories",
    "ho_ground_momentum",
    "ho_ground_position",
    "oscillator_stationary",
    "plane_wave_energy",
    "plane_wave_momentum",
    "plane_wave_position",
    "property1_ho_ground",
    "property1_packet",
    "property1_plane_wave",
    "property1_spinor",
    "robustness_probe_packet",
    "spin_separable",
    "verify_appendix",
    "waveguide_sweep",
);

/// Every bundled scenario, sorted by name.
pub fn bundled() -> &'static [BundledScenario] {
    BUNDLED
}

/// Looks a scenario up by name. Hyphens and a trailing `.json` are
/// accepted, so `verify-appendix.json` finds `verify_appendix`.
pub fn find_bundled(name: &str) -> Option<&'static BundledScenario> {
    let key = name.strip_suffix(".json").unwrap_or(name).replace('-', "_");
    BUNDLED.iter().find(|b| b.name == key)
}
