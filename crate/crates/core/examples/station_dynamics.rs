//! Pile bookkeeping, battery charging and the hydrogen-discounted price.

use hydrocharge::station::{charging_price, remaining_time, FcsState, Occupant};

fn main() -> hydrocharge::Result<()> {
    let dt = 0.25;
    let mut fcs = FcsState::new(3, 200.0, 0.01, 0.7);
    let arrival = |ev: usize, soc: f64, power_kw: f64| -> hydrocharge::Result<Occupant> {
        Ok(Occupant {
            ev,
            soc,
            capacity_kwh: 75.0,
            power_kw,
            remaining_h: remaining_time(soc, 75.0, power_kw, 0.9)?,
            pending: false,
        })
    };

    let stored = fcs.step(vec![arrival(0, 0.2, 88.0)?, arrival(1, 0.85, 44.0)?], dt, 0.9)?;
    println!(
        "t=0: stored {stored:.1} kWh, free piles {}, departing next {}",
        fcs.available,
        fcs.departing(dt)
    );
    for t in 1..6 {
        let stored = fcs.step(Vec::new(), dt, 0.9)?;
        let socs: Vec<String> = fcs
            .occupants
            .iter()
            .map(|o| format!("ev{}:{:.2}", o.ev, o.soc))
            .collect();
        println!(
            "t={t}: stored {stored:5.1} kWh, free {}, {}",
            fcs.available,
            socs.join(" ")
        );
        fcs.check_invariants()?;
    }

    println!("\nprice at TOU 1.2 with 50 kWh base and 100 kWh demand:");
    for h in [0.0, 30.0, 75.0, 150.0, 200.0] {
        println!(
            "  hydrogen {h:5.1} kWh -> {:.3} CNY/kWh",
            charging_price(50.0, 100.0, h, 1.2)?
        );
    }
    Ok(())
}
