//! Maximum-weight linear assignment.
//!
//! ```text
//! cargo run --example linear_assignment
//! ```

use geopath::align::{assignment_score, solve_lap};
use geopath::Matrix;

fn main() -> geopath::Result<()> {
    let score = Matrix::from_rows(&[
        vec![7.0, 5.0, 1.0, 2.0],
        vec![4.0, 8.0, 3.0, 3.0],
        vec![6.0, 6.0, 6.0, 1.0],
        vec![2.0, 9.0, 4.0, 7.0],
    ])?;
    let sigma = solve_lap(&score)?;
    println!(
        "assignment {sigma:?}, total {}",
        assignment_score(&score, &sigma)
    );

    // every assignment of a constant matrix is optimal; the smallest wins
    let flat = Matrix::new(3, 3, vec![1.0; 9])?;
    println!("ties resolve to {:?}", solve_lap(&flat)?);
    Ok(())
}
