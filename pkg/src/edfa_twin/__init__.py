"""EDFA gain-spectrum modeling and transfer learning toolkit."""
