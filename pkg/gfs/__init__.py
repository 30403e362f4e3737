"""Graph filter submatrix (GFS) sampling package."""
