use std::collections::BTreeMap;

use coilboard_core::driver::{
    deserialize_shift_chain, encode_frame, serialize_to_shift_chain, ChainLayout, ShiftChainImage,
};
use coilboard_core::grid::{CoilGrid, CoilId, HardwareProfile, Layer, ModuleId, TilePlacement};
use coilboard_core::planner::{plan_multi, MotionPlan, PlanStatus, PlannerOptions};
use coilboard_core::sim::MarkerId;
use proptest::prelude::*;

fn tiled_grid() -> impl Strategy<Value = CoilGrid> {
    (2u32..6, 2u32..6, 1u32..4, 1u32..3, 3.0f64..12.0).prop_map(|(rows, cols, nx, ny, pitch)| {
        let mut tiles = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                tiles.push(TilePlacement {
                    id: ModuleId(j * nx + i),
                    rows,
                    cols,
                    pitch_mm: pitch,
                    origin_mm: [i as f64 * cols as f64 * pitch, j as f64 * rows as f64 * pitch],
                });
            }
        }
        CoilGrid::tile(&tiles, HardwareProfile::default()).unwrap()
    })
}

proptest! {
    #[test]
    fn grid_files_round_trip(grid in tiled_grid()) {
        let back = CoilGrid::from_json(&grid.to_json()).unwrap();
        prop_assert_eq!(back.coil_count(), grid.coil_count());
        for c in grid.coil_ids() {
            prop_assert_eq!(back.addr_of(c).unwrap(), grid.addr_of(c).unwrap());
            prop_assert_eq!(back.center_of(c).unwrap(), grid.center_of(c).unwrap());
            prop_assert_eq!(back.neighbor_ids(c).unwrap(), grid.neighbor_ids(c).unwrap());
        }
        prop_assert_eq!(back, grid);
    }

    #[test]
    fn plans_round_trip(
        paths in prop::collection::btree_map(0u32..50, prop::collection::vec((0u32..512, 1u32..5), 1..8), 0..6),
        partial in any::<bool>(),
    ) {
        let mut per_marker = BTreeMap::new();
        let mut makespan = 0;
        for (m, steps) in paths {
            let mut t = 0;
            let mut path = Vec::new();
            for (i, (coil, gap)) in steps.into_iter().enumerate() {
                if i > 0 {
                    t += gap;
                }
                path.push((CoilId(coil), t));
            }
            makespan = makespan.max(t);
            per_marker.insert(MarkerId(m), path);
        }
        let plan = MotionPlan {
            per_marker,
            makespan_ticks: makespan,
            status: if partial { PlanStatus::PartialFailure } else { PlanStatus::Complete },
            unplanned: if partial { vec![MarkerId(99)] } else { Vec::new() },
        };
        prop_assert_eq!(MotionPlan::from_json(&plan.to_json()).unwrap(), plan);
    }

    #[test]
    fn planned_plans_round_trip(seed in 0u32..480, goal in 0u32..480) {
        let grid = CoilGrid::prototype();
        let start = CoilId(seed);
        prop_assume!(start != CoilId(goal));
        let plan = plan_multi(
            &grid,
            &BTreeMap::from([(MarkerId(1), start)]),
            &BTreeMap::from([(MarkerId(1), CoilId(goal))]),
            PlannerOptions::default(),
        ).unwrap();
        let back = MotionPlan::from_json(&plan.to_json()).unwrap();
        back.validate(&grid).unwrap();
        prop_assert_eq!(back, plan);
    }

    #[test]
    fn shift_chain_hex_round_trip(
        rows in 2u32..9,
        cols in 2u32..9,
        row in 0u32..8,
        col_mask in any::<u8>(),
        top in any::<bool>(),
    ) {
        let grid = CoilGrid::build(rows, cols, 10.0 * cols as f64, HardwareProfile::default()).unwrap();
        let layer = if top { Layer::Top } else { Layer::Bottom };
        let r = row % rows;
        let coils: Vec<(u32, u32)> = (0..cols).filter(|c| col_mask >> (c % 8) & 1 == 1).map(|c| (r, c)).collect();
        let pattern = encode_frame(&grid, ModuleId(0), layer, &coils).unwrap();
        let layout = ChainLayout::sequential(ModuleId(0), layer, rows, cols);
        let image = serialize_to_shift_chain(&pattern, &layout).unwrap();
        let parsed = ShiftChainImage::from_hex(&image.to_hex()).unwrap();
        prop_assert_eq!(&parsed, &image);
        prop_assert_eq!(deserialize_shift_chain(&parsed, &layout).unwrap(), pattern);
    }
}
