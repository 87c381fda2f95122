/** Attribute carousel state: one page per attribute, kept in the server's
 * weight-descending order. Heatmaps are fetched once per attribute and cached. */

import { ApiClient, AttributeEntry, EvaluateResponse } from "./api.js";

export interface CarouselOptions {
  /** wrap past the ends instead of stopping (default: stop) */
  wrap?: boolean;
}

export class Carousel {
  private index = 0;
  private heatmaps = new Map<string, Promise<Blob>>();
  fetchCount = 0;

  constructor(
    private readonly client: ApiClient,
    private response: EvaluateResponse,
    private readonly options: CarouselOptions = {},
  ) {}

  get pageCount(): number {
    return this.response.attributes.length;
  }

  get currentIndex(): number {
    return this.index;
  }

  get current(): AttributeEntry {
    return this.response.attributes[this.index];
  }

  pages(): AttributeEntry[] {
    return this.response.attributes;
  }

  next(): AttributeEntry {
    return this.goTo(this.index + 1);
  }

  previous(): AttributeEntry {
    return this.goTo(this.index - 1);
  }

  goTo(i: number): AttributeEntry {
    const n = this.pageCount;
    if (this.options.wrap) {
      this.index = ((i % n) + n) % n;
    } else {
      this.index = Math.min(Math.max(i, 0), n - 1);
    }
    return this.current;
  }

  /** Replace the response (a new evaluation): resets paging and the cache. */
  update(response: EvaluateResponse): void {
    this.response = response;
    this.index = 0;
    this.heatmaps.clear();
  }

  /** Heatmap blob for a page; repeated calls for one attribute hit the cache. */
  heatmap(name: string): Promise<Blob> {
    const entry = this.response.attributes.find((a) => a.name === name);
    if (!entry) return Promise.reject(new Error(`unknown attribute ${name}`));
    let pending = this.heatmaps.get(name);
    if (!pending) {
      this.fetchCount += 1;
      pending = this.client.fetchHeatmap(entry.heatmap_url);
      this.heatmaps.set(name, pending);
    }
    return pending;
  }
}
