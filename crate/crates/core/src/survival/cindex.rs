use crate::error::{Error, Result};

/// Harrell's concordance index.
///
/// A pair is comparable when the earlier subject had an event, or when both
/// share a time and only the first had an event. Higher risk on the earlier
/// failure is concordant; tied risks earn half credit.
pub fn c_index(risk: &[f64], time: &[f64], event: &[bool]) -> Result<f64> {
    let n = risk.len();
    if time.len() != n || event.len() != n {
        return Err(Error::DimensionMismatch(
            "risk, time and event lengths differ".into(),
        ));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| time[a].total_cmp(&time[b]));

    let mut comparable = 0u64;
    let mut credit2 = 0u64; // twice the credit, so ties stay integral
    for (pos, &i) in order.iter().enumerate() {
        if !event[i] {
            continue;
        }
        // everything after i in time order, plus same-time censored subjects
        // that sort before it
        let later = order[pos + 1..].iter().copied();
        let same_time_before = order[..pos]
            .iter()
            .rev()
            .take_while(|&&j| time[j] == time[i])
            .copied();
        for j in later.chain(same_time_before) {
            let tied_time = time[j] == time[i];
            if tied_time && event[j] {
                continue;
            }
            comparable += 1;
            if risk[i] > risk[j] {
                credit2 += 2;
            } else if risk[i] == risk[j] {
                credit2 += 1;
            }
        }
    }
    if comparable == 0 {
        return Err(Error::NoComparablePairs);
    }
    Ok(credit2 as f64 / (2 * comparable) as f64)
}
