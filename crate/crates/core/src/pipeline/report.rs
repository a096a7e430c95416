//! Flat CSV views of simulation records, for plotting.

use std::io::Write;

use super::EpochRecord;

fn rounded(v: f64) -> String {
    format!("{}", v.round() as i64)
}

/// `epoch,role,uav,cluster_id,lat,lon,covered`; `role` is `current` or
/// `predicted`.
pub fn write_positions_csv<W: Write>(writer: W, records: &[EpochRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "role", "uav", "cluster_id", "lat", "lon", "covered"])?;
    for r in records {
        for (role, list) in [("current", &r.current_positions), ("predicted", &r.predicted_positions)] {
            for (k, p) in list.iter().enumerate() {
                w.write_record([
                    r.epoch_index.to_string(),
                    role.to_string(),
                    k.to_string(),
                    p.cluster_id.to_string(),
                    p.pos.lat.to_string(),
                    p.pos.lon.to_string(),
                    p.covered.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `epoch,from,to,cost_m,cost_m_rounded` for every (current, predicted) pair.
pub fn write_costs_csv<W: Write>(writer: W, records: &[EpochRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "from", "to", "cost_m", "cost_m_rounded"])?;
    for r in records {
        for (i, from) in r.current_positions.iter().enumerate() {
            for (j, to) in r.predicted_positions.iter().enumerate() {
                let d = crate::trajectory::haversine_m(from.pos, to.pos);
                w.write_record([r.epoch_index.to_string(), i.to_string(), j.to_string(), d.to_string(), rounded(d)])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `epoch,uav,to,cost_m,cost_m_rounded`: the chosen move of each UAV.
pub fn write_matchings_csv<W: Write>(writer: W, records: &[EpochRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "uav", "to", "cost_m", "cost_m_rounded"])?;
    for r in records {
        for (i, &j) in r.matching.perm.iter().enumerate() {
            let d = crate::trajectory::haversine_m(r.current_positions[i].pos, r.predicted_positions[j].pos);
            w.write_record([r.epoch_index.to_string(), i.to_string(), j.to_string(), d.to_string(), rounded(d)])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `epoch,user_id,rmse_weighted,mean_error_m`.
pub fn write_rmse_csv<W: Write>(writer: W, records: &[EpochRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["epoch", "user_id", "rmse_weighted", "mean_error_m"])?;
    for r in records {
        for ((f, rmse), err) in r.forecasts.iter().zip(&r.per_ue_rmse).zip(&r.per_ue_error_m) {
            w.write_record([r.epoch_index.to_string(), f.user_id.clone(), rmse.to_string(), err.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
