"""3D NAND flash processing-in-memory simulator and design-space explorer."""
