/**
 * HTML-string renderers. Keeping them pure (data in, markup out) lets
 * tests assert on exactly what the user sees without a browser; main.ts
 * swaps the strings into the page.
 */

import type { PositionView, ServiceConfig, StateView } from "./api.js";
import {
  formatAmount,
  needsMarginAlert,
  rowLocked,
  sliderBounds,
  statusBadge,
  tableOrder,
} from "./model.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function renderOpenForm(config: ServiceConfig): string {
  const bounds = sliderBounds(config);
  const options = config.accounts
    .map((name) => `<option value="${escapeHtml(name)}">${escapeHtml(name)}</option>`)
    .join("");
  return `
<form id="open-form" autocomplete="off">
  <label>Account
    <select name="owner" id="open-owner">${options}</select>
  </label>
  <label>Collateral (ETH)
    <input name="collateral" id="open-collateral" inputmode="decimal" placeholder="3" value="">
  </label>
  <label>Leverage <output id="open-leverage-value">1.50</output>&times;
    <input type="range" name="leverage" id="open-leverage" min="${bounds.min}"
           max="${bounds.displayMax}" step="0.01" value="1.5">
  </label>
  <p class="hint">slider cap ${bounds.displayMax.toFixed(1)}&times;; submissions above
     ${bounds.submitMax.toFixed(2)}&times; are rejected by the safety margin</p>
  <button type="submit" id="open-submit" data-action="open" disabled>Open position</button>
  <p class="form-error" id="open-error"></p>
</form>`;
}

export function renderPositionsTable(positions: PositionView[]): string {
  if (positions.length === 0) {
    return `<p class="empty">No positions yet.</p>`;
  }
  const rows = positions
    .map((position) => {
      const report = position.report;
      const locked = rowLocked(report.status);
      const actions = locked
        ? `<span class="locked">settled</span>`
        : `<button data-action="add-collateral" data-position="${position.id}">Add collateral</button>
           <button data-action="close" data-position="${position.id}">Close</button>`;
      return `
<tr class="${locked ? "row-locked" : "row-live"}" data-position-row="${position.id}">
  <td>${position.id}</td>
  <td>${escapeHtml(position.owner)}</td>
  <td>${formatAmount(position.achieved_leverage, 2)}&times;</td>
  <td>${formatAmount(position.entry_price)}</td>
  <td class="liquidation-price" data-liquidation-price="${escapeHtml(position.liquidation_price)}">
      ${formatAmount(position.liquidation_price)}</td>
  <td>${formatAmount(report.equity)}</td>
  <td>${formatAmount(report.pnl)}</td>
  <td><span class="badge ${statusBadge(report.status)}">${report.status}</span></td>
  <td>${actions}</td>
</tr>`;
    })
    .join("");
  return `
<table class="positions">
  <thead>
    <tr><th>id</th><th>owner</th><th>leverage</th><th>entry</th>
        <th>liq. price</th><th>equity</th><th>P/L</th><th>status</th><th></th></tr>
  </thead>
  <tbody>${rows}</tbody>
</table>`;
}

export function renderAlerts(positions: PositionView[]): string {
  const alerts = positions
    .filter((position) => needsMarginAlert(position.report))
    .map(
      (position) => `
<div class="alert margin-call" role="alert" data-alert-position="${position.id}">
  <strong>Margin call on position ${position.id}</strong>
  — collateralization ${formatAmount(position.report.collateralization ?? "", 4)}
  is inside the warning band (liquidation at ${formatAmount(position.liquidation_price)}).
  <button data-action="add-collateral" data-position="${position.id}">Add collateral</button>
  <button data-action="close" data-position="${position.id}">Close</button>
</div>`,
    );
  return alerts.join("");
}

export function renderScenarioPanel(state: StateView): string {
  const price = state.price === null ? "—" : formatAmount(state.price);
  return `
<div class="scenario">
  <dl>
    <dt>block</dt><dd id="scenario-height">${state.block_height}</dd>
    <dt>price</dt><dd id="scenario-price">${price}</dd>
    <dt>digest</dt><dd class="digest">${state.digest.slice(0, 16)}…</dd>
  </dl>
  <label>Set price next block
    <input id="steer-price" inputmode="decimal" value="${state.price === null ? "" : escapeHtml(state.price)}">
  </label>
  <button data-action="steer-price">Apply price</button>
  <label>Advance
    <input id="advance-blocks" type="number" min="1" step="1" value="1"> block(s)
  </label>
  <button data-action="advance">Advance</button>
  <p class="form-error" id="scenario-error"></p>
</div>`;
}

export function renderBanner(stale: boolean, detail = ""): string {
  if (!stale) {
    return "";
  }
  return `<div class="banner stale" role="status">
    Connection lost — showing stale data${detail ? ` (${escapeHtml(detail)})` : ""}.
  </div>`;
}
