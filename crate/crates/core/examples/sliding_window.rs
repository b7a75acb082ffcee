//! Plans 384-pixel windows at stride 128 over a wide image and fuses
//! per-window maps back into one full-image map.

use zsol::grid::DensityMap;
use zsol::locate::{fuse_windows, plan_windows};

fn main() -> zsol::Result<()> {
    let (h, w) = (384, 700);
    let plan = plan_windows(h, w)?;
    println!(
        "{h}x{w} image -> {} windows of {}x{}",
        plan.len(),
        plan.window_height,
        plan.window_width
    );
    for win in plan.windows() {
        println!("  origin x = {:>3}, y = {:>3}", win.x, win.y);
    }

    // Constant windows fuse to the same constant: overlaps are averaged.
    let maps = (0..plan.len())
        .map(|_| DensityMap::new(plan.window_height, plan.window_width, vec![0.5; plan.window_height * plan.window_width]))
        .collect::<zsol::Result<Vec<_>>>()?;
    let fused = fuse_windows(&maps, &plan)?;
    let (lo, hi) = fused
        .values()
        .iter()
        .fold((f32::MAX, f32::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    println!("fused {}x{}: values in [{lo}, {hi}]", fused.height(), fused.width());
    Ok(())
}
