//! Wind and solar output of a production station and the hydrogen power it
//! yields over one generated day.

use hydrocharge::renewables::{hydrogen_power, pv_power, wind_power, HpsState};
use hydrocharge::scenario::{generate_scenario, ScenarioConfig};

fn main() -> hydrocharge::Result<()> {
    let hps = HpsState::default();
    println!("wind curve (kW):");
    for v in [0.0, 3.0, 6.0, 9.0, 12.0, 18.0, 22.0, 23.0] {
        println!("  {v:4} m/s -> {:8.1}", wind_power(v, &hps.wind));
    }
    println!("pv at 500 W/m2: {:.1} kW", pv_power(500.0, &hps.pv));
    println!("hydrogen chain coefficient: {:.5}", hps.chain.coefficient());

    let cfg = ScenarioConfig::from_toml_str(include_str!("../scenarios/desk.toml"))?;
    let sc = generate_scenario(&cfg, 0)?;
    println!("\nhour  wind(m/s)  rad(W/m2)  hydrogen kW (producer 0)");
    for t in (0..sc.steps()).step_by(8) {
        let (v, g) = (sc.wind[0][t], sc.radiation[0][t]);
        println!(
            "{:4.1}  {v:9.2}  {g:9.1}  {:10.2}",
            t as f64 * sc.delta_h(),
            hydrogen_power(v, g, &sc.hps[0])
        );
    }
    Ok(())
}
