//! Parsing of `--k-grid`: `start:stop:step` (inclusive of `stop` up to
//! rounding) or an explicit comma separated list.

pub fn parse(spec: &str) -> Result<Vec<f64>, String> {
    let spec = spec.trim();
    let grid = if spec.contains(':') {
        range(spec)?
    } else {
        spec.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| number(s))
            .collect::<Result<Vec<_>, _>>()?
    };
    if grid.is_empty() {
        return Err(format!("k grid {spec:?} is empty"));
    }
    if let Some(bad) = grid.iter().find(|k| **k < 0.0) {
        return Err(format!("k grid contains negative value {bad}"));
    }
    Ok(grid)
}

fn number(s: &str) -> Result<f64, String> {
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("invalid k value {s:?}"))
}

fn range(spec: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = spec.split(':').map(str::trim).collect();
    let [start, stop, step] = parts[..] else {
        return Err(format!("k grid {spec:?} must be start:stop:step"));
    };
    let (start, stop, step) = (number(start)?, number(stop)?, number(step)?);
    if step <= 0.0 {
        return Err(format!("k grid step must be positive, got {step}"));
    }
    if stop < start {
        return Ok(Vec::new());
    }
    // Index-based so that 0:2:0.1 yields exactly 21 points.
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_include_stop() {
        let g = parse("0:2:0.1").unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[0], 0.0);
        assert!((g[20] - 2.0).abs() < 1e-12);
        assert_eq!(parse("1:1:0.5").unwrap(), vec![1.0]);
    }

    #[test]
    fn lists() {
        assert_eq!(parse("0, 0.5,1").unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(parse("").is_err());
        assert!(parse("2:1:0.1").is_err());
        assert!(parse("0:1:0").is_err());
        assert!(parse("0:1").is_err());
        assert!(parse("a,b").is_err());
        assert!(parse("-1,2").is_err());
    }
}
