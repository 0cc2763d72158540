package com.example.shop;

import org.junit.Test;
import static org.junit.Assert.assertThrows;
import static org.junit.Assert.assertTrue;

public class InventoryThrowsTest {

    @Test
    public void restockOverflowSaturates() {
        Inventory inv = new Inventory();
        int first = inv.restock("sku", Integer.MAX_VALUE);
        // TODO: assert here
        int second = inv.restock("sku", 1);
        // TODO: assert here
        // TODO: assert here
    }
}
