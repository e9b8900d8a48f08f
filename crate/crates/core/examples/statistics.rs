//! Recomputes reported t statistics, effect sizes and confidence intervals
//! from (mean, SD, n) summaries.

use vicarious::harness::{welch_compare, SummaryStats};

fn main() -> vicarious::Result<()> {
    let stats = |mean, sd| SummaryStats::from_moments(mean, sd, 5, 0.95);
    let base = stats(116.88, 4.16)?;
    let rows = [("vc composite, theta 0.60", stats(142.16, 7.72)?), ("stimuli", stats(44.30, 28.71)?), ("vc intrinsic only", stats(139.96, 11.17)?)];

    println!("base: {:.2} [{:.2}, {:.2}]", base.mean, base.ci_low, base.ci_high);
    for (name, s) in rows {
        let c = welch_compare(&s, &base)?;
        println!(
            "{name:>26}: {:.2} [{:.2}, {:.2}]  t({:.1}) = {:.2}, p = {:.2e}, d = {:.2}",
            s.mean, s.ci_low, s.ci_high, c.df, c.t, c.p_value, c.cohens_d
        );
    }
    Ok(())
}
