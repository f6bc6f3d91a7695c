use proptest::prelude::*;
use volchem_core::compiler::{Instruction, Op};
use volchem_core::{
    execute, AnalyteId, AnalyteRegistry, Deck, InstructionSequence, Location, NoiseModel,
    PlateDims, PlateState, SolutionState,
};

const A: AnalyteId = AnalyteId(1);
const B: AnalyteId = AnalyteId(2);

fn data(k: usize) -> Location {
    Location::Data(PlateDims::WELLS_384.address_of(k).unwrap())
}

fn out(k: usize) -> Location {
    Location::Output(PlateDims::WELLS_96.address_of(k).unwrap())
}

fn deck_with(masses: &[(f64, f64)]) -> Deck {
    let mut plate = PlateState::new(PlateDims::WELLS_384);
    for (k, &(a, b)) in masses.iter().enumerate() {
        let addr = PlateDims::WELLS_384.address_of(k).unwrap();
        plate
            .set_well(addr, SolutionState::from_masses(60.0, &[(A, a), (B, b)]))
            .unwrap();
    }
    Deck::new(
        AnalyteRegistry::phenols(),
        plate,
        PlateState::with_capacity(PlateDims::WELLS_96, 2000.0),
    )
}

/// Draws of at most 5 uL from 4 data wells into 2 pools, then solvent.
fn program(draws: &[(usize, usize, f64)]) -> InstructionSequence {
    let mut seq = InstructionSequence::new("p");
    for &(src, dst, v) in draws {
        seq.push(Instruction::transfer(data(src), out(dst), v).unwrap());
    }
    seq.push(Instruction::transfer(Location::Solvent, out(0), 10.0).unwrap());
    seq.push(Instruction::transfer(Location::Solvent, out(1), 10.0).unwrap());
    seq
}

fn masses() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((0.0..2.0f64, 0.0..2.0f64), 4)
}

fn draws() -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..4usize, 0..2usize, 0.0..5.0f64), 1..10)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn superposition(ma in masses(), mb in masses(), d in draws()) {
        let sum: Vec<(f64, f64)> = ma.iter().zip(&mb).map(|(x, y)| (x.0 + y.0, x.1 + y.1)).collect();
        let seq = program(&d);
        let run = |m: &[(f64, f64)]| execute(&seq, &deck_with(m), &NoiseModel::disabled(), 0).unwrap().0;
        let (da, db, dab) = (run(&ma), run(&mb), run(&sum));
        for k in 0..2 {
            let Location::Output(w) = out(k) else { unreachable!() };
            for id in [A, B] {
                let lhs = dab.output.well(w).mass_mg(id);
                let rhs = da.output.well(w).mass_mg(id) + db.output.well(w).mass_mg(id);
                prop_assert!(rel_close(lhs, rhs, 1e-12) || (lhs - rhs).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mass_and_volume_conserved_without_stock(m in masses(), d in draws(), seed in any::<u64>(), noisy in any::<bool>()) {
        let deck = deck_with(&m);
        let noise = if noisy { NoiseModel::default() } else { NoiseModel::disabled() };
        let seq = program(&d);
        let (after, log) = execute(&seq, &deck, &noise, seed).unwrap();
        for id in [A, B] {
            prop_assert!(rel_close(after.total_mass_mg(id), deck.total_mass_mg(id), 1e-12));
        }
        let solvent: f64 = log.entries.iter().filter(|e| e.op == Op::TransferSolvent).map(|e| e.delivered_ul).sum();
        let before = deck.data.total_volume_ul() + deck.output.total_volume_ul() + solvent;
        let now = after.data.total_volume_ul() + after.output.total_volume_ul();
        prop_assert!(rel_close(before, now, 1e-12));
    }

    #[test]
    fn pooled_concentration_is_volume_weighted(vols in prop::collection::vec(0.1..6.0f64, 1..4)) {
        let m = [(1.0, 0.0), (0.5, 0.0), (0.25, 0.0), (2.0, 0.0)];
        let draws: Vec<(usize, usize, f64)> = vols.iter().enumerate().map(|(k, &v)| (k, 0, v)).collect();
        let (after, _) = execute(&program(&draws), &deck_with(&m), &NoiseModel::disabled(), 0).unwrap();
        let Location::Output(w) = out(0) else { unreachable!() };
        let v_f: f64 = vols.iter().sum::<f64>() + 10.0;
        let expected: f64 = vols.iter().enumerate().map(|(k, v)| v / v_f * (m[k].0 / 60.0 * 1000.0)).sum();
        prop_assert!(rel_close(after.output.well(w).concentration(A).unwrap(), expected, 1e-12));
    }
}
