"""
Sweep Plot

Renders a sweep summary as a trend figure: buffer switches, BF and CF per axis
value, with wall time on a second axis when the runs were timed.
"""

from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt
import pandas as pd
import seaborn as sns
from loguru import logger


class SweepPlotter:
    """Plot sweep summary tables"""

    def __init__(self, output_dir: str = "reports"):
        """
        Initialize the plotter.

        Args:
            output_dir: Directory figures are written to when no explicit path is given
        """
        self.output_dir = Path(output_dir)
        sns.set_theme(style="whitegrid")
        sns.set_palette("husl")

    def plot(self, table: pd.DataFrame, path: Optional[str] = None) -> Path:
        """
        Draw one sweep table.

        Args:
            table: Output of harness.sweep.run_sweep
            path: Figure path; defaults to <output_dir>/sweep_<workload>_<axis>.png

        Returns:
            Path of the written figure
        """
        if table.empty:
            raise ValueError("cannot plot an empty sweep table")
        axis = str(table['axis'].iloc[0])
        workload = str(table['workload'].iloc[0])
        target = Path(path) if path else self.output_dir / f"sweep_{workload.replace(':', '_')}_{axis}.png"
        target.parent.mkdir(parents=True, exist_ok=True)

        data = table.assign(value=table['value'].astype(str))
        counts = data.melt(id_vars=['value'], value_vars=['buffer_switches', 'bf', 'cf'],
                           var_name='counter', value_name='count')

        fig, ax = plt.subplots(figsize=(9, 5))
        sns.barplot(data=counts, x='value', y='count', hue='counter', ax=ax)
        ax.set_xlabel(axis)
        ax.set_ylabel('events')
        ax.set_title(f"{workload}: {axis} sweep", fontweight='bold')

        timed = data['wall_seconds'].notna()
        if timed.any():
            wall_ax = ax.twinx()
            sns.lineplot(x=data.loc[timed, 'value'], y=data.loc[timed, 'wall_seconds'].astype(float),
                         marker='o', color='black', ax=wall_ax, label='wall time')
            wall_ax.set_ylabel('wall seconds')
            wall_ax.grid(False)

        plt.tight_layout()
        plt.savefig(target, dpi=150, bbox_inches='tight')
        plt.close(fig)
        logger.info(f"Sweep figure written to {target}")
        return target
