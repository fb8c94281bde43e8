pub mod assignment_oracle;
pub mod map_oracle;
